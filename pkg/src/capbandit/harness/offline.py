"""Unconstrained full-information benchmark: fit on the whole log, then route by argmax."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import TaskLog
from ..errors import InvalidSpec
from ..policy import ModelParams
from ..reward_models import TreeEnsemble, fit_map, sigmoid_array
from .engine import prepare_features

FAMILIES = ("logistic", "tree")


@dataclass
class OfflineResult:
    family: str
    error_rate: float
    assignment: np.ndarray
    fitted_means: np.ndarray

    @property
    def fractions(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.fitted_means.shape[1]) / self.assignment.size


def fitted_means(log: TaskLog, family: str, params: ModelParams | None = None, bias: bool = True,
                 standardize: bool = False, seed: int = 0) -> np.ndarray:
    """Per-agent means fitted on every record's counterfactual reward."""
    params = params or ModelParams()
    tree_x, logit_x = prepare_features(log, bias, standardize)
    cols = []
    for a in range(log.n_agents):
        y = log.rewards[:, a].astype(float)
        if family == "logistic":
            post = fit_map(logit_x, y, params.prior_precision, params.kappa)
            cols.append(sigmoid_array(logit_x @ post.mean))
        elif family == "tree":
            ens = TreeEnsemble(tree_x.shape[1], params.n_trees, params.max_depth, params.min_leaf,
                               params.refit_period, params.prior_mean, seed=seed, agent=a)
            ens.fit(tree_x, y)
            cols.append(ens.predict_many(tree_x))
        else:
            raise InvalidSpec(f"unknown model family {family!r}; expected one of {FAMILIES}")
    return np.column_stack(cols)


def run_offline_benchmark(log: TaskLog, family: str, params: ModelParams | None = None,
                          bias: bool = True, standardize: bool = False, seed: int = 0) -> OfflineResult:
    mu_hat = fitted_means(log, family, params, bias, standardize, seed)
    assignment = np.argmax(mu_hat, axis=1)
    reward = log.rewards[np.arange(log.n_records), assignment].mean()
    return OfflineResult(family, 1.0 - float(reward), assignment, mu_hat)
