"""Empirical regret of a finished run against known (or estimated) means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RegretReport:
    """Cumulative series, one entry per round.

    ``modified`` is the shortfall in ``mu - eta * q`` against the best agent
    under the queue state actually reached. ``reward_shortfall`` compares the
    plain mean reward with a constant per-round oracle value.
    """

    modified: np.ndarray
    reward_shortfall: np.ndarray | None
    approximate: bool = False

    @property
    def total(self) -> float:
        return float(self.modified[-1]) if self.modified.size else 0.0

    def half_increments(self) -> tuple[float, float]:
        """Regret accrued over the first and the second half of the run."""
        T = self.modified.size
        mid = T // 2
        first = float(self.modified[mid - 1]) if mid else 0.0
        return first, float(self.modified[-1]) - first


def compute_regret(agents, queues, mu, eta: float, oracle_value: float | None = None,
                   allowed=None, approximate: bool = False) -> RegretReport:
    agents = np.asarray(agents, dtype=np.int64)
    mu = np.asarray(mu, dtype=float)[: agents.size]
    adjusted = mu - eta * np.asarray(queues, dtype=float)[: agents.size]
    rows = np.arange(agents.size)
    if allowed is not None:
        best = np.where(allowed, adjusted, -np.inf).max(axis=1)
    else:
        best = adjusted.max(axis=1)
    modified = np.cumsum(best - adjusted[rows, agents])
    shortfall = None
    if oracle_value is not None:
        shortfall = np.cumsum(oracle_value - mu[rows, agents])
    return RegretReport(modified, shortfall, approximate)


def linear_slope(series) -> float:
    """Least-squares slope of a series against its round index."""
    series = np.asarray(series, dtype=float)
    t = np.arange(1, series.size + 1, dtype=float)
    return float(np.polyfit(t, series, 1)[0])
