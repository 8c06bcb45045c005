"""Selection rules, baselines, and finite-sample constrained oracles."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .batch import assign_batch, largest_remainder
from .capacity import QueueBank
from .domain import CapacityProfile
from .errors import CapacityOutsideWindow, InfeasibleCounts
from .reward_models import LogisticPosterior, MarginalMean, TreeEnsemble


class PolicyKind(str, enum.Enum):
    LOGISTIC_GREEDY = "logistic_greedy"
    LOGISTIC_TS = "logistic_ts"
    TREE_GREEDY = "tree_greedy"
    TREE_TS = "tree_ts"
    RANDOM = "random"
    LEARNED_NONCONTEXTUAL = "learned_noncontextual"
    ORACLE_UNCONSTRAINED = "oracle_unconstrained"
    ORACLE_CONSTRAINED = "oracle_constrained"

    @property
    def contextual(self) -> bool:
        return self in CONTEXTUAL_KINDS

    @property
    def uses_queue_rule(self) -> bool:
        """True for every kind that picks agents by penalized argmax."""
        return self not in (PolicyKind.RANDOM, PolicyKind.ORACLE_CONSTRAINED)

    @property
    def deterministic(self) -> bool:
        return self not in (PolicyKind.LOGISTIC_TS, PolicyKind.TREE_TS, PolicyKind.RANDOM)


CONTEXTUAL_KINDS = (
    PolicyKind.LOGISTIC_GREEDY,
    PolicyKind.LOGISTIC_TS,
    PolicyKind.TREE_GREEDY,
    PolicyKind.TREE_TS,
)


def select(scores, qb: QueueBank, allowed=None) -> int:
    """Penalized argmax ``scores - eta * q``; ties go to the lowest index."""
    adjusted = np.asarray(scores, dtype=float) - qb.penalties()
    if allowed is not None:
        adjusted = np.where(allowed, adjusted, -np.inf)
    return int(np.argmax(adjusted))


def random_select(profile: CapacityProfile, rng: np.random.Generator) -> int:
    """Draw an agent with probability ``alpha_a``, ignoring the context."""
    cum = np.cumsum(profile.as_array())
    u = rng.random() * cum[-1]
    return int(min(np.searchsorted(cum, u, side="right"), cum.size - 1))


# -- oracles ---------------------------------------------------------------------


def oracle_unconstrained(mu_table) -> tuple[np.ndarray, float]:
    """Row-wise argmax of the mean table and the mean of the row maxima."""
    mu = np.asarray(mu_table, dtype=float)
    assignment = np.argmax(mu, axis=1)
    return assignment, float(mu[np.arange(mu.shape[0]), assignment].mean())


def oracle_counts(profile: CapacityProfile, n: int) -> np.ndarray:
    return largest_remainder(profile.as_array() * n, n)


def oracle_constrained_two_agent(delta, alpha: float) -> tuple[float, np.ndarray]:
    """Send the ``alpha`` share of records with the largest gap to agent 0.

    Returns ``(threshold, assignment)`` where the threshold is the smallest
    selected gap (``inf`` when nothing is selected).
    """
    delta = np.asarray(delta, dtype=float)
    n = delta.size
    k = int(largest_remainder([alpha * n, (1.0 - alpha) * n], n)[0])
    order = np.argsort(-delta, kind="stable")
    assignment = np.ones(n, dtype=np.int64)
    assignment[order[:k]] = 0
    tau = float(delta[order[k - 1]]) if k > 0 else float("inf")
    return tau, assignment


@dataclass
class ShadowPrices:
    lambdas: np.ndarray
    threshold: float | None = None


@dataclass
class OracleResult:
    assignment: np.ndarray
    value: float
    shadow_prices: ShadowPrices
    counts: np.ndarray


def oracle_constrained_general(mu_table, profile: CapacityProfile, counts=None) -> OracleResult:
    """Exact best assignment of records to agents under per-agent counts.

    Counts default to the largest-remainder apportionment of ``alpha * n``.
    Free agents are uncapped and the other counts become upper bounds.
    """
    mu = np.asarray(mu_table, dtype=float)
    n, n_agents = mu.shape
    if counts is None:
        counts = oracle_counts(profile, n)
    counts = np.asarray(counts, dtype=np.int64)
    free = ~profile.constrained
    if counts.shape != (n_agents,) or np.any(counts < 0):
        raise InfeasibleCounts(f"counts {counts.tolist()} invalid for {n_agents} agents")
    if not free.any() and int(counts.sum()) != n:
        raise InfeasibleCounts(f"counts {counts.tolist()} do not sum to {n} records")
    plan = assign_batch(mu, counts, free=free)
    lam = plan.shadow_prices
    threshold = float(lam[0] - lam[1]) if n_agents == 2 else None
    value = float(mu[np.arange(n), plan.assignment].mean())
    return OracleResult(plan.assignment, value, ShadowPrices(lam, threshold), plan.counts)


def random_value(mu_table, profile: CapacityProfile) -> float:
    """Expected reward of the context-free random split: ``sum_a alpha_a * mean(mu_a)``."""
    mu = np.asarray(mu_table, dtype=float)
    return float(profile.as_array() @ mu.mean(axis=0))


def disagreement_gain(delta, alpha: float) -> float:
    """Gain of the two-agent constrained oracle over random assignment.

    Valid only when the capacity covers every record where agent 0 is strictly
    better and leaves room for every record where agent 1 is.
    """
    delta = np.asarray(delta, dtype=float)
    p1 = float(np.mean(delta > 0))
    p2 = float(np.mean(delta < 0))
    eps = 1e-12
    if not (p1 - eps <= alpha <= 1.0 - p2 + eps):
        raise CapacityOutsideWindow(
            f"alpha={alpha} outside [{p1}, {1.0 - p2}]: disagreement cannot be fully exploited"
        )
    pos = float(np.mean(np.where(delta > 0, delta, 0.0)))
    neg = float(np.mean(np.where(delta < 0, -delta, 0.0)))
    return (1.0 - alpha) * pos + alpha * neg


def write_oracle_csv(assignment, mu_table, stream: BinaryIO) -> None:
    """CSV ``record_index,assigned_agent,mu_assigned`` with 1-based agents."""
    mu = np.asarray(mu_table, dtype=float)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["record_index", "assigned_agent", "mu_assigned"])
    for i, a in enumerate(assignment):
        w.writerow([i, int(a) + 1, repr(float(mu[i, a]))])
    stream.write(buf.getvalue().encode("utf-8"))


# -- score sources for the online loop --------------------------------------------


@dataclass
class ModelParams:
    kappa: float = 0.5
    prior_precision: float = 1.0
    n_trees: int = 20
    max_depth: int = 3
    min_leaf: int = 10
    refit_period: int = 20
    prior_mean: float = 0.5


class Scorer:
    """Per-agent reward estimates fed to the penalized argmax.

    ``scores`` sees only the current context; ``update`` receives the one
    revealed reward of the chosen agent.
    """

    n_updates = 0

    def scores(self, t: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def update(self, agent: int, t: int, reward: int) -> None:
        raise NotImplementedError

    def models(self) -> list:
        return []


class LogisticScorer(Scorer):
    def __init__(self, features, n_agents, params: ModelParams, thompson: bool):
        self.features = features
        self.thompson = thompson
        self.posteriors = [
            LogisticPosterior.prior(features.shape[1], params.prior_precision, params.kappa)
            for _ in range(n_agents)
        ]
        self.n_updates = 0

    def scores(self, t, rng):
        x = self.features[t]
        if self.thompson:
            return np.array([p.sample(x, rng) for p in self.posteriors])
        return np.array([p.predict(x) for p in self.posteriors])

    def update(self, agent, t, reward):
        self.posteriors[agent].update(self.features[t], reward)
        self.n_updates += 1

    def models(self):
        return self.posteriors


class TreeScorer(Scorer):
    def __init__(self, features, n_agents, params: ModelParams, thompson: bool, seed: int):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.thompson = thompson
        self.ensembles = [
            TreeEnsemble(features.shape[1], params.n_trees, params.max_depth, params.min_leaf,
                         params.refit_period, params.prior_mean, seed=seed, agent=a)
            for a in range(n_agents)
        ]
        self.n_updates = 0

    def scores(self, t, rng):
        x = self.features[t]
        if self.thompson:
            return np.array([e.sample(x, rng) for e in self.ensembles])
        return np.array([e.predict(x) for e in self.ensembles])

    def update(self, agent, t, reward):
        self.ensembles[agent].update(self.features[t], reward)
        self.n_updates += 1

    def models(self):
        return self.ensembles


class MarginalScorer(Scorer):
    def __init__(self, n_agents):
        self.estimates = [MarginalMean() for _ in range(n_agents)]
        self.n_updates = 0

    def scores(self, t, rng):
        return np.array([m.predict() for m in self.estimates])

    def update(self, agent, t, reward):
        self.estimates[agent].update(reward)
        self.n_updates += 1

    def models(self):
        return self.estimates


class TrueMeanScorer(Scorer):
    """Scores with the known conditional means (synthetic logs only)."""

    def __init__(self, mu):
        if mu is None:
            raise InfeasibleCounts("oracle scoring needs a log with true means")
        self.mu = mu
        self.n_updates = 0

    def scores(self, t, rng):
        return self.mu[t]

    def update(self, agent, t, reward):
        self.n_updates += 1


def make_scorer(kind: PolicyKind, features, log_mu, n_agents: int, params: ModelParams,
                seed: int = 0, logistic_features=None) -> Scorer | None:
    kind = PolicyKind(kind)
    if kind in (PolicyKind.LOGISTIC_GREEDY, PolicyKind.LOGISTIC_TS):
        feats = features if logistic_features is None else logistic_features
        return LogisticScorer(feats, n_agents, params, kind is PolicyKind.LOGISTIC_TS)
    if kind in (PolicyKind.TREE_GREEDY, PolicyKind.TREE_TS):
        return TreeScorer(features, n_agents, params, kind is PolicyKind.TREE_TS, seed)
    if kind is PolicyKind.LEARNED_NONCONTEXTUAL:
        return MarginalScorer(n_agents)
    if kind is PolicyKind.ORACLE_UNCONSTRAINED:
        return TrueMeanScorer(log_mu)
    return None
