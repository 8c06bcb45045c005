"""Bayesian logistic reward model with a streaming Laplace posterior."""
from __future__ import annotations

import math

import numpy as np

from ..errors import CholeskyFailure, DimensionMismatch

W_MIN = 1e-4
W_MAX = 0.25
JITTER = 1e-8
MAX_JITTER_TRIES = 3


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LogisticPosterior:
    """Gaussian approximation ``N(mean, cov)`` over the logistic weights.

    ``kappa`` scales the covariance for Thompson draws only; the greedy
    prediction always uses the mean.
    """

    def __init__(self, mean, cov, prior_precision: float = 1.0, kappa: float = 0.5):
        self.mean = np.array(mean, dtype=float)
        self.cov = np.array(cov, dtype=float)
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise DimensionMismatch("covariance must be d x d for a length-d mean")
        self.prior_precision = float(prior_precision)
        self.kappa = float(kappa)
        self._chol = None

    @classmethod
    def prior(cls, dim: int, prior_precision: float = 1.0, kappa: float = 0.5) -> "LogisticPosterior":
        return cls(np.zeros(dim), np.eye(dim) / prior_precision, prior_precision, kappa)

    @property
    def dim(self) -> int:
        return self.mean.size

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"context has shape {x.shape}, model expects ({self.dim},)")
        return x

    def predict(self, x) -> float:
        x = self._check(x)
        return sigmoid(float(self.mean @ x))

    def cholesky(self) -> np.ndarray:
        """Lower factor of ``cov``, with diagonal jitter on failure."""
        if self._chol is None:
            eye = np.eye(self.dim)
            for attempt in range(MAX_JITTER_TRIES + 1):
                try:
                    self._chol = np.linalg.cholesky(self.cov + attempt * JITTER * eye)
                    break
                except np.linalg.LinAlgError:
                    continue
            else:
                raise CholeskyFailure("covariance is not positive definite after jitter")
        return self._chol

    def sample(self, x, rng: np.random.Generator) -> float:
        x = self._check(x)
        if self.kappa == 0.0:
            return sigmoid(float(self.mean @ x))
        z = rng.standard_normal(self.dim)
        theta = self.mean + self.kappa * (self.cholesky() @ z)
        return sigmoid(float(theta @ x))

    def update(self, x, r: int) -> None:
        """Rank-one Laplace step for one observation ``(x, r)``.

        The clipped curvature only enters the covariance; the mean step uses
        the raw residual ``r - p``.
        """
        x = self._check(x)
        p = sigmoid(float(self.mean @ x))
        w = min(max(p * (1.0 - p), W_MIN), W_MAX)
        sx = self.cov @ x
        cov = self.cov - (w / (1.0 + w * float(x @ sx))) * np.outer(sx, sx)
        cov = 0.5 * (cov + cov.T)
        self.mean = self.mean + (r - p) * (cov @ x)
        self.cov = cov
        self._chol = None

    def copy(self) -> "LogisticPosterior":
        return LogisticPosterior(self.mean, self.cov, self.prior_precision, self.kappa)

    def state_dict(self) -> dict:
        return {
            "type": "logistic",
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "prior_precision": self.prior_precision,
            "kappa": self.kappa,
        }

    @classmethod
    def from_state(cls, state: dict) -> "LogisticPosterior":
        return cls(state["mean"], state["cov"], state["prior_precision"], state["kappa"])


def fit_map(X, y, prior_precision: float = 1.0, kappa: float = 0.5, tol: float = 1e-10,
            max_iter: int = 100) -> LogisticPosterior:
    """Batch MAP fit by Newton's method under a ``N(0, I/prior_precision)`` prior.

    Returns the Laplace posterior at the mode. Used by the offline benchmark.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    theta = np.zeros(d)
    for _ in range(max_iter):
        p = sigmoid_array(X @ theta)
        grad = X.T @ (p - y) + prior_precision * theta
        hess = (X * (p * (1 - p))[:, None]).T @ X + prior_precision * np.eye(d)
        step = np.linalg.solve(hess, grad)
        theta = theta - step
        if np.max(np.abs(step)) < tol:
            break
    p = sigmoid_array(X @ theta)
    hess = (X * (p * (1 - p))[:, None]).T @ X + prior_precision * np.eye(d)
    cov = np.linalg.inv(hess)
    return LogisticPosterior(theta, 0.5 * (cov + cov.T), prior_precision, kappa)
