"""Bootstrap ensemble of shallow regression trees.

Trees are stored as complete binary arrays (node ``k`` has children ``2k+1``
and ``2k+2``). ``feature[k] == -1`` marks a leaf, ``-2`` an unused slot. A
bootstrap resample is represented by per-record multiplicities, which gives
the same tree as fitting on the resampled rows while letting every tree in a
refit share one presort of the buffer.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import DimensionMismatch

LEAF = -1
UNUSED = -2
MIN_GAIN = 1e-12


@njit(cache=True)
def _fit_forest(X, y, counts, order, max_depth, min_leaf, feature, threshold, value):
    n_trees, n = counts.shape
    d = X.shape[1]
    node_of = np.zeros(n, dtype=np.int64)
    for b in range(n_trees):
        w = counts[b]
        feature[b, :] = UNUSED
        threshold[b, :] = 0.0
        value[b, :] = 0.0
        feature[b, 0] = LEAF
        node_of[:] = 0
        for level in range(max_depth + 1):
            first = (1 << level) - 1
            width = 1 << level
            tot_w = np.zeros(width)
            tot_s = np.zeros(width)
            for i in range(n):
                if w[i] == 0:
                    continue
                kk = node_of[i] - first
                if 0 <= kk < width:
                    tot_w[kk] += w[i]
                    tot_s[kk] += w[i] * y[i]
            for kk in range(width):
                if feature[b, first + kk] == LEAF and tot_w[kk] > 0:
                    v = tot_s[kk] / tot_w[kk]
                    value[b, first + kk] = min(max(v, 0.0), 1.0)
            if level == max_depth:
                break

            best_gain = np.full(width, MIN_GAIN)
            best_f = np.full(width, -1, dtype=np.int64)
            best_t = np.zeros(width)
            for j in range(d):
                left_w = np.zeros(width)
                left_s = np.zeros(width)
                last_v = np.zeros(width)
                for pos in range(n):
                    i = order[j, pos]
                    if w[i] == 0:
                        continue
                    kk = node_of[i] - first
                    if kk < 0 or kk >= width:
                        continue
                    v = X[i, j]
                    lw = left_w[kk]
                    if lw > 0 and v != last_v[kk] and lw >= min_leaf and tot_w[kk] - lw >= min_leaf:
                        ls = left_s[kk]
                        rw = tot_w[kk] - lw
                        rs = tot_s[kk] - ls
                        gain = ls * ls / lw + rs * rs / rw - tot_s[kk] * tot_s[kk] / tot_w[kk]
                        if gain > best_gain[kk]:
                            best_gain[kk] = gain
                            best_f[kk] = j
                            t = 0.5 * (last_v[kk] + v)
                            if t >= v:
                                t = last_v[kk]
                            best_t[kk] = t
                    left_w[kk] = lw + w[i]
                    left_s[kk] += w[i] * y[i]
                    last_v[kk] = v

            any_split = False
            for kk in range(width):
                k = first + kk
                if best_f[kk] >= 0 and tot_w[kk] >= 2 * min_leaf:
                    feature[b, k] = best_f[kk]
                    threshold[b, k] = best_t[kk]
                    feature[b, 2 * k + 1] = LEAF
                    feature[b, 2 * k + 2] = LEAF
                    any_split = True
            if not any_split:
                break
            for i in range(n):
                k = node_of[i]
                f = feature[b, k]
                if f >= 0:
                    if X[i, f] <= threshold[b, k]:
                        node_of[i] = 2 * k + 1
                    else:
                        node_of[i] = 2 * k + 2


@njit(cache=True)
def _predict_forest(feature, threshold, value, x):
    n_trees = feature.shape[0]
    out = np.empty(n_trees)
    for b in range(n_trees):
        k = 0
        while feature[b, k] >= 0:
            if x[feature[b, k]] <= threshold[b, k]:
                k = 2 * k + 1
            else:
                k = 2 * k + 2
        out[b] = value[b, k]
    return out


@njit(cache=True)
def _predict_forest_many(feature, threshold, value, X):
    out = np.empty((X.shape[0], feature.shape[0]))
    for i in range(X.shape[0]):
        out[i] = _predict_forest(feature, threshold, value, X[i])
    return out


def fit_forest(X, y, counts, max_depth=3, min_leaf=10):
    """Fit one tree per row of ``counts`` (bootstrap multiplicities)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T, dtype=np.int64)
    n_nodes = (1 << (max_depth + 1)) - 1
    n_trees = counts.shape[0]
    feature = np.empty((n_trees, n_nodes), dtype=np.int64)
    threshold = np.empty((n_trees, n_nodes))
    value = np.empty((n_trees, n_nodes))
    _fit_forest(X, y, counts, order, max_depth, float(min_leaf), feature, threshold, value)
    return feature, threshold, value


class TreeEnsemble:
    """Per-agent bootstrap forest refit on a fixed cadence of observed updates.

    The bootstrap draw for refit ``m`` comes from a generator seeded with
    ``(seed, agent, m)``; tree ``b`` uses row ``b`` of that draw.
    """

    def __init__(self, dim: int, n_trees: int = 20, max_depth: int = 3, min_leaf: int = 10,
                 refit_period: int = 20, prior_mean: float = 0.5, seed: int = 0, agent: int = 0):
        self.dim = int(dim)
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.refit_period = int(refit_period)
        self.prior_mean = float(prior_mean)
        self.seed = int(seed)
        self.agent = int(agent)
        self._X = np.empty((64, self.dim))
        self._y = np.empty(64)
        self.n_obs = 0
        self.updates_since_refit = 0
        self.n_fits = 0
        self.feature = None
        self.threshold = None
        self.value = None

    @property
    def fitted(self) -> bool:
        return self.feature is not None

    @property
    def buffer_x(self) -> np.ndarray:
        return self._X[: self.n_obs]

    @property
    def buffer_y(self) -> np.ndarray:
        return self._y[: self.n_obs]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"context has shape {x.shape}, model expects ({self.dim},)")
        return x

    def tree_predictions(self, x) -> np.ndarray:
        x = self._check(x)
        return _predict_forest(self.feature, self.threshold, self.value, x)

    def predict(self, x) -> float:
        if not self.fitted:
            return self.prior_mean
        return min(max(float(self.tree_predictions(x).mean()), 0.0), 1.0)

    def predict_many(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if not self.fitted:
            return np.full(X.shape[0], self.prior_mean)
        preds = _predict_forest_many(self.feature, self.threshold, self.value, X)
        return np.clip(preds.mean(axis=1), 0.0, 1.0)

    def sample(self, x, rng: np.random.Generator) -> float:
        if not self.fitted:
            return float(rng.random())
        b = int(rng.integers(self.n_trees))
        return float(self.tree_predictions(x)[b])

    def update(self, x, r) -> None:
        x = self._check(x)
        if self.n_obs == self._X.shape[0]:
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._X[self.n_obs] = x
        self._y[self.n_obs] = r
        self.n_obs += 1
        self.updates_since_refit += 1
        if self.updates_since_refit >= self.refit_period:
            self.refit()
            self.updates_since_refit = 0

    def bootstrap_counts(self, n: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.agent, self.n_fits])
        idx = rng.integers(0, n, size=(self.n_trees, n))
        idx += np.arange(self.n_trees)[:, None] * n
        return np.bincount(idx.ravel(), minlength=self.n_trees * n).reshape(self.n_trees, n)

    def refit(self) -> None:
        n = self.n_obs
        counts = self.bootstrap_counts(n)
        self.feature, self.threshold, self.value = fit_forest(
            self.buffer_x, self.buffer_y, counts, self.max_depth, self.min_leaf
        )
        self.n_fits += 1

    def fit(self, X, y) -> None:
        """Replace the buffer with ``(X, y)`` and refit immediately."""
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        self._X = X.copy()
        self._y = np.asarray(y, dtype=np.float64).copy()
        self.n_obs = X.shape[0]
        self.updates_since_refit = 0
        self.refit()

    def state_dict(self) -> dict:
        state = {
            "type": "tree",
            "dim": self.dim,
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "refit_period": self.refit_period,
            "prior_mean": self.prior_mean,
            "seed": self.seed,
            "agent": self.agent,
            "buffer_x": self.buffer_x.tolist(),
            "buffer_y": self.buffer_y.tolist(),
            "updates_since_refit": self.updates_since_refit,
            "n_fits": self.n_fits,
            "trees": None,
        }
        if self.fitted:
            state["trees"] = {
                "feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "value": self.value.tolist(),
            }
        return state

    @classmethod
    def from_state(cls, state: dict) -> "TreeEnsemble":
        ens = cls(state["dim"], state["n_trees"], state["max_depth"], state["min_leaf"],
                  state["refit_period"], state["prior_mean"], state["seed"], state["agent"])
        X = np.asarray(state["buffer_x"], dtype=np.float64).reshape(-1, ens.dim)
        n = X.shape[0]
        cap = max(64, n)
        ens._X = np.empty((cap, ens.dim))
        ens._y = np.empty(cap)
        ens._X[:n] = X
        ens._y[:n] = state["buffer_y"]
        ens.n_obs = n
        ens.updates_since_refit = state["updates_since_refit"]
        ens.n_fits = state["n_fits"]
        trees = state["trees"]
        if trees is not None:
            ens.feature = np.asarray(trees["feature"], dtype=np.int64)
            ens.threshold = np.asarray(trees["threshold"], dtype=np.float64)
            ens.value = np.asarray(trees["value"], dtype=np.float64)
        return ens
