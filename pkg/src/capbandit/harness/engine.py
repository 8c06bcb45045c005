"""Online and mini-batch simulation over a counterfactual reward log."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from ..batch import apportion_counts, assign_batch
from ..capacity import DEFAULT_ETA, QueueBank
from ..domain import CapacityProfile, TaskLog, add_bias, standardize_contexts, validate_capacity_profile
from ..errors import CheckpointError, InvalidSpec
from ..policy import (
    ModelParams,
    PolicyKind,
    make_scorer,
    oracle_constrained_general,
    random_select,
    select,
)
from ..reward_models import dump_model, load_model
from .regret import compute_regret

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
# the policy RNG is a separate PCG64 stream from the permutation that uses the bare seed
_POLICY_STREAM = 1


@dataclass
class AssignmentTrace:
    """Per-round record. ``queues[t]`` is the state seen when round ``t`` was decided."""

    agents: np.ndarray
    rewards: np.ndarray
    queues: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.agents.size

    def rows(self):
        for t in range(len(self)):
            yield t + 1, int(self.agents[t]), int(self.rewards[t]), self.queues[t], self.scores[t]

    def write_csv(self, stream: BinaryIO) -> None:
        """CSV ``t,agent,reward,score_1..A,q_1..A`` with 1-based rounds and agents."""
        n_agents = self.queues.shape[1]
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "reward"]
                   + [f"score_{a + 1}" for a in range(n_agents)]
                   + [f"q_{a + 1}" for a in range(n_agents)])
        for t, a, r, q, s in self.rows():
            w.writerow([t, a + 1, r] + [repr(float(v)) for v in s] + [repr(float(v)) for v in q])
        stream.write(buf.getvalue().encode("utf-8"))


@dataclass
class RunResult:
    policy: str
    profile: CapacityProfile
    seed: int
    error_rate: float
    fractions: np.ndarray
    final_queues: np.ndarray
    n_updates: int
    regret: float | None = None
    trace: AssignmentTrace | None = None
    batch_counts: list = field(default_factory=list)
    apportioned_counts: list = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return 1.0 - self.error_rate


def prepare_features(log: TaskLog, bias: bool = True, standardize: bool = False):
    """Features for tree models and for logistic models (the latter with bias)."""
    X = log.contexts
    if standardize:
        X = standardize_contexts(X)
    X = np.ascontiguousarray(X, dtype=np.float64)
    return X, (add_bias(X) if bias else X)


def log_fingerprint(log: TaskLog) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(log.contexts).tobytes())
    h.update(np.ascontiguousarray(log.rewards).tobytes())
    return h.hexdigest()


class OnlineSimulation:
    """Sequential assignment over ``log`` in record order.

    Each round: score agents on the context, pick by penalized argmax (or the
    kind's own rule), reveal only the chosen agent's reward to the model,
    then advance the queues.
    """

    def __init__(self, log: TaskLog, kind, profile: CapacityProfile, seed: int,
                 eta: float = DEFAULT_ETA, params: ModelParams | None = None,
                 bias: bool = True, standardize: bool = False):
        if profile.n_agents != log.n_agents:
            raise InvalidSpec(f"profile has {profile.n_agents} agents, log has {log.n_agents}")
        self.log = log
        self.kind = PolicyKind(kind)
        self.profile = profile
        self.seed = int(seed)
        self.params = params or ModelParams()
        self.bias = bias
        self.standardize = standardize
        self.qb = QueueBank(profile, eta)
        self.rng = np.random.default_rng([self.seed, _POLICY_STREAM])
        alpha = profile.as_array()
        # a constrained agent with zero share is never eligible
        self.allowed = ~(profile.constrained & (alpha == 0.0))
        self._rewards = log.rewards
        tree_x, logit_x = prepare_features(log, bias, standardize)
        self.scorer = make_scorer(self.kind, tree_x, log.mu, log.n_agents, self.params,
                                  seed=self.seed, logistic_features=logit_x)
        self.plan = None
        if self.kind is PolicyKind.ORACLE_CONSTRAINED:
            if log.mu is None:
                raise InvalidSpec("the constrained oracle policy needs a log with true means")
            self.plan = oracle_constrained_general(log.mu, profile).assignment
        T, A = log.rewards.shape
        self.agents = np.zeros(T, dtype=np.int64)
        self.revealed = np.zeros(T, dtype=np.int8)
        self.queues = np.zeros((T, A))
        self.scores = np.full((T, A), np.nan)
        self.t = 0
        self.n_revealed = 0

    @property
    def n_rounds(self) -> int:
        return self.log.n_records

    @property
    def done(self) -> bool:
        return self.t >= self.n_rounds

    def _choose(self, t: int) -> int:
        kind = self.kind
        if kind is PolicyKind.RANDOM:
            return random_select(self.profile, self.rng)
        if kind is PolicyKind.ORACLE_CONSTRAINED:
            return int(self.plan[t])
        s = self.scorer.scores(t, self.rng)
        self.scores[t] = s
        return select(s, self.qb, self.allowed)

    def _reveal(self, t: int, agent: int) -> int:
        r = int(self._rewards[t, agent])
        self.agents[t] = agent
        self.revealed[t] = r
        self.n_revealed += 1
        if self.scorer is not None:
            self.scorer.update(agent, t, r)
        return r

    def step(self) -> None:
        t = self.t
        self.queues[t] = self.qb.q
        agent = self._choose(t)
        self._reveal(t, agent)
        self.qb.step(agent)
        self.t = t + 1

    def run(self, until: int | None = None) -> "OnlineSimulation":
        stop = self.n_rounds if until is None else min(until, self.n_rounds)
        while self.t < stop:
            self.step()
        return self

    def trace(self) -> AssignmentTrace:
        n = self.t
        return AssignmentTrace(self.agents[:n].copy(), self.revealed[:n].copy(),
                               self.queues[:n].copy(), self.scores[:n].copy())

    def result(self, keep_trace: bool = False) -> RunResult:
        n = self.t
        agents = self.agents[:n]
        fractions = np.bincount(agents, minlength=self.log.n_agents) / max(n, 1)
        # integer reward count keeps the rate independent of record order
        error = 1.0 - int(self.revealed[:n].sum(dtype=np.int64)) / n if n else 0.0
        regret = None
        if self.log.mu is not None and n:
            report = compute_regret(agents, self.queues[:n], self.log.mu, self.qb.eta,
                                    allowed=self.allowed)
            regret = report.total
        n_updates = self.scorer.n_updates if self.scorer is not None else self.n_revealed
        return RunResult(self.kind.value, self.profile, self.seed, error, fractions,
                         self.qb.q.copy(), n_updates, regret,
                         self.trace() if keep_trace else None)

    # -- checkpoints ----------------------------------------------------------------

    def state_dict(self) -> dict:
        n = self.t
        return {
            "version": CHECKPOINT_VERSION,
            "log_sha256": log_fingerprint(self.log),
            "kind": self.kind.value,
            "alphas": list(self.profile.alphas),
            "unconstrained": list(self.profile.unconstrained),
            "seed": self.seed,
            "eta": self.qb.eta,
            "params": vars(self.params).copy(),
            "bias": self.bias,
            "standardize": self.standardize,
            "t": n,
            "q": self.qb.q.tolist(),
            "rng": self.rng.bit_generator.state,
            "n_revealed": self.n_revealed,
            "scorer_updates": getattr(self.scorer, "n_updates", 0),
            "models": [dump_model(m) for m in self.scorer.models()] if self.scorer else [],
            "agents": self.agents[:n].tolist(),
            "revealed": self.revealed[:n].tolist(),
            "queues": self.queues[:n].tolist(),
            "scores": [[None if np.isnan(v) else v for v in row] for row in self.scores[:n].tolist()],
        }

    @classmethod
    def from_state(cls, log: TaskLog, state: dict) -> "OnlineSimulation":
        if state.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {state.get('version')!r}")
        if state["log_sha256"] != log_fingerprint(log):
            raise CheckpointError("checkpoint was written for a different task log")
        profile = validate_capacity_profile(state["alphas"], state["unconstrained"])
        sim = cls(log, state["kind"], profile, state["seed"], state["eta"],
                  ModelParams(**state["params"]), state["bias"], state["standardize"])
        n = state["t"]
        sim.t = n
        sim.qb.q = np.asarray(state["q"], dtype=float)
        sim.rng.bit_generator.state = state["rng"]
        sim.n_revealed = state["n_revealed"]
        if sim.scorer is not None:
            models = [load_model(m) for m in state["models"]]
            if models:
                for attr in ("posteriors", "ensembles", "estimates"):
                    if hasattr(sim.scorer, attr):
                        setattr(sim.scorer, attr, models)
            sim.scorer.n_updates = state["scorer_updates"]
        sim.agents[:n] = state["agents"]
        sim.revealed[:n] = state["revealed"]
        sim.queues[:n] = np.asarray(state["queues"], dtype=float).reshape(n, -1)
        sim.scores[:n] = np.array(
            [[np.nan if v is None else v for v in row] for row in state["scores"]], dtype=float
        ).reshape(n, -1)
        return sim


def save_checkpoint(sim: OnlineSimulation, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sim.state_dict(), fh)


def load_checkpoint(path, log: TaskLog) -> OnlineSimulation:
    with open(path, encoding="utf-8") as fh:
        return OnlineSimulation.from_state(log, json.load(fh))


def run_online(log: TaskLog, kind, profile: CapacityProfile, seed: int, eta: float = DEFAULT_ETA,
               params: ModelParams | None = None, bias: bool = True, standardize: bool = False,
               keep_trace: bool = False) -> RunResult:
    sim = OnlineSimulation(log, kind, profile, seed, eta, params, bias, standardize)
    return sim.run().result(keep_trace)


def run_batched(log: TaskLog, kind, profile: CapacityProfile, seed: int, batch_size: int,
                eta: float = DEFAULT_ETA, params: ModelParams | None = None, bias: bool = True,
                standardize: bool = False, keep_trace: bool = False, keep_plans: bool = False):
    """Assign ``batch_size`` tasks at a time; outcomes are revealed after each batch.

    Counts come from :func:`apportion_counts`; a batch of one has no joint
    choice to make and uses the online penalized argmax instead.
    """
    if batch_size < 1:
        raise InvalidSpec("batch size must be >= 1")
    sim = OnlineSimulation(log, kind, profile, seed, eta, params, bias, standardize)
    free = ~profile.constrained
    T, A = log.rewards.shape
    plans = []
    batch_counts, apportioned = [], []
    start = 0
    while start < T:
        stop = min(start + batch_size, T)
        size = stop - start
        sim.queues[start:stop] = sim.qb.q
        if sim.kind is PolicyKind.RANDOM:
            chosen = np.array([random_select(profile, sim.rng) for _ in range(size)])
            target = None
        elif sim.kind is PolicyKind.ORACLE_CONSTRAINED:
            chosen = sim.plan[start:stop]
            target = None
        else:
            S = np.array([sim.scorer.scores(t, sim.rng) for t in range(start, stop)])
            sim.scores[start:stop] = S
            if size == 1:
                chosen = np.array([select(S[0], sim.qb, sim.allowed)])
                target = np.bincount(chosen, minlength=A)
            else:
                target = apportion_counts(profile, sim.qb, size)
                plan = assign_batch(S - sim.qb.penalties(), target, free=free if free.any() else None)
                chosen = plan.assignment
                if keep_plans:
                    plans.append(plan)
        for i, t in enumerate(range(start, stop)):
            sim._reveal(t, int(chosen[i]))
        counts = np.bincount(chosen, minlength=A)
        batch_counts.append(counts)
        apportioned.append(target)
        sim.qb.batch_step(counts, size)
        sim.t = stop
        start = stop
    result = sim.result(keep_trace)
    result.batch_counts = batch_counts
    result.apportioned_counts = apportioned
    if keep_plans:
        return result, plans
    return result
