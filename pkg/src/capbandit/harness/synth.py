"""Synthetic counterfactual logs with known conditional means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import TaskLog
from ..errors import InvalidSpec
from ..reward_models import sigmoid_array

AGENT_KINDS = ("logistic", "constant", "checkerboard")
LAWS = ("uniform", "gaussian")


@dataclass(frozen=True)
class AgentSpec:
    """True accuracy surface of one simulated agent.

    ``logistic``: ``sigmoid(weights . x + intercept)``.
    ``constant``: ``p`` everywhere.
    ``checkerboard``: ``high`` on cells whose index parity equals ``phase``,
    ``low`` elsewhere; ``cells`` per axis over the first two features.
    For ``checkerboard`` the ``high``/``low`` fields are accuracies, not the box.
    """

    kind: str
    weights: tuple[float, ...] = ()
    intercept: float = 0.0
    p: float = 0.5
    cells: int = 2
    high: float = 0.9
    low: float = 0.3
    phase: int = 0
    name: str = ""

    def mean(self, X: np.ndarray, low: float = -1.0, high: float = 1.0) -> np.ndarray:
        if self.kind == "logistic":
            return sigmoid_array(X @ np.asarray(self.weights, dtype=float) + self.intercept)
        if self.kind == "constant":
            return np.full(X.shape[0], self.p)
        axes = X[:, : min(2, X.shape[1])]
        idx = np.clip(np.floor((axes - low) / (high - low) * self.cells), 0, self.cells - 1).astype(int)
        parity = idx.sum(axis=1) % 2
        return np.where(parity == self.phase, self.high, self.low)


@dataclass(frozen=True)
class SynthSpec:
    dim: int
    n_tasks: int
    agents: tuple[AgentSpec, ...]
    law: str = "uniform"
    low: float = -1.0
    high: float = 1.0
    free_agent: bool = False

    def validate(self) -> None:
        if self.dim < 1:
            raise InvalidSpec("dim must be >= 1")
        if self.n_tasks < 1:
            raise InvalidSpec("n_tasks must be >= 1")
        if len(self.agents) < 2:
            raise InvalidSpec("need at least two agents")
        if self.law not in LAWS:
            raise InvalidSpec(f"unknown context law {self.law!r}; expected one of {LAWS}")
        if self.law == "uniform" and not self.low < self.high:
            raise InvalidSpec("uniform law needs low < high")
        if self.law == "gaussian" and not self.high > 0:
            raise InvalidSpec("gaussian law uses 'high' as the standard deviation; must be > 0")
        for i, a in enumerate(self.agents):
            if a.kind not in AGENT_KINDS:
                raise InvalidSpec(f"agent {i}: unknown kind {a.kind!r}")
            if a.kind == "logistic" and len(a.weights) != self.dim:
                raise InvalidSpec(f"agent {i}: {len(a.weights)} weights for dim {self.dim}")
            if a.kind == "constant" and not 0.0 <= a.p <= 1.0:
                raise InvalidSpec(f"agent {i}: p={a.p} outside [0, 1]")
            if a.kind == "checkerboard":
                if a.cells < 1 or not (0 <= a.low <= 1 and 0 <= a.high <= 1):
                    raise InvalidSpec(f"agent {i}: bad checkerboard parameters")

    def box(self) -> tuple[float, float]:
        """Range tiled by checkerboard cells; +-2 sd around the mean for gaussian contexts."""
        if self.law == "uniform":
            return self.low, self.high
        return self.low - 2 * self.high, self.low + 2 * self.high

    def agent_names(self) -> tuple[str, ...]:
        return tuple(a.name or f"agent{i + 1}" for i, a in enumerate(self.agents))


def true_means(spec: SynthSpec, X: np.ndarray) -> np.ndarray:
    lo, hi = spec.box()
    return np.column_stack([a.mean(X, lo, hi) for a in spec.agents])


def synth_generate(spec: SynthSpec, seed: int) -> TaskLog:
    """Draw i.i.d. contexts and independent Bernoulli rewards per agent."""
    spec.validate()
    rng = np.random.default_rng(seed)
    shape = (spec.n_tasks, spec.dim)
    if spec.law == "uniform":
        X = rng.uniform(spec.low, spec.high, size=shape)
    else:
        X = spec.low + spec.high * rng.standard_normal(shape)
    mu = true_means(spec, X)
    rewards = (rng.random(mu.shape) < mu).astype(np.int8)
    return TaskLog(X, rewards, spec.agent_names(), mu)


# -- presets ------------------------------------------------------------------------


def complementary(n_tasks: int = 5000, slope: float = 4.0) -> SynthSpec:
    """Two agents that are each better on one half of ``x ~ U[-1, 1]``."""
    return SynthSpec(1, n_tasks, (
        AgentSpec("logistic", (slope,), name="rises"),
        AgentSpec("logistic", (-slope,), name="falls"),
    ))


def dominant(n_tasks: int = 5000, p1: float = 0.9, p2: float = 0.6) -> SynthSpec:
    return SynthSpec(1, n_tasks, (
        AgentSpec("constant", p=p1, name="strong"),
        AgentSpec("constant", p=p2, name="weak"),
    ))


def checkerboard(n_tasks: int = 5000, high: float = 0.9, low: float = 0.3) -> SynthSpec:
    """Two agents with opposite 2x2 checkerboard expertise on ``[-1, 1]^2``."""
    return SynthSpec(2, n_tasks, (
        AgentSpec("checkerboard", cells=2, high=high, low=low, phase=0, name="even"),
        AgentSpec("checkerboard", cells=2, high=high, low=low, phase=1, name="odd"),
    ))


def free_agent(n_tasks: int = 5000, slope: float = 4.0, p_free: float = 0.7) -> SynthSpec:
    """Complementary pair plus a flat third agent that is run without a queue."""
    return SynthSpec(1, n_tasks, (
        AgentSpec("logistic", (slope,), name="rises"),
        AgentSpec("logistic", (-slope,), name="falls"),
        AgentSpec("constant", p=p_free, name="free"),
    ), free_agent=True)


PRESETS = {
    "complementary": complementary,
    "dominant": dominant,
    "checkerboard": checkerboard,
    "free_agent": free_agent,
}
