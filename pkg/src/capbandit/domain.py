"""Core value types: capacity profiles, counterfactual reward logs, permutations.

A :class:`TaskLog` holds every agent's correctness on every task. The online
policies only ever see the chosen agent's reward (enforced in the harness);
the full table exists so that oracles, offline benchmarks and regret can be
computed on the same records.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConstrainedAgent,
    NonBinaryReward,
    ParseError,
    RangeViolation,
    SumViolation,
)

SUM_TOL = 1e-9


@dataclass(frozen=True)
class CapacityProfile:
    """Long-run assignment targets. Unconstrained agents carry ``alpha = 0``."""

    alphas: tuple[float, ...]
    unconstrained: tuple[bool, ...]

    @property
    def n_agents(self) -> int:
        return len(self.alphas)

    @property
    def constrained(self) -> np.ndarray:
        return ~np.asarray(self.unconstrained, dtype=bool)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alphas, dtype=float)

    def label(self) -> str:
        parts = []
        for a, free in zip(self.alphas, self.unconstrained):
            parts.append("free" if free else f"{a:g}")
        return "/".join(parts)


def validate_capacity_profile(alphas, unconstrained=None) -> CapacityProfile:
    alphas = [float(a) for a in alphas]
    if unconstrained is None:
        unconstrained = [False] * len(alphas)
    unconstrained = [bool(u) for u in unconstrained]
    if len(alphas) != len(unconstrained):
        raise DimensionMismatch(
            f"{len(alphas)} capacities but {len(unconstrained)} constraint flags"
        )
    if not alphas:
        raise NoConstrainedAgent("empty capacity profile")
    for i, a in enumerate(alphas):
        if not math.isfinite(a):
            raise RangeViolation(f"alpha[{i}] is not finite")
        if not unconstrained[i] and not 0.0 <= a <= 1.0:
            raise RangeViolation(f"alpha[{i}] = {a} outside [0, 1]")
    if all(unconstrained):
        raise NoConstrainedAgent("at least one agent must be capacity constrained")
    total = math.fsum(a for a, u in zip(alphas, unconstrained) if not u)
    if abs(total - 1.0) > SUM_TOL:
        raise SumViolation(f"constrained capacities sum to {total!r}, expected 1")
    # shares are kept as given (not rescaled) so revalidation is a no-op
    normalized = tuple(0.0 if u else a for a, u in zip(alphas, unconstrained))
    return CapacityProfile(normalized, tuple(unconstrained))


def two_agent_profile(alpha1: float, free_agent: bool = False) -> CapacityProfile:
    """Profile ``(alpha1, 1 - alpha1)``, optionally followed by a free agent."""
    alphas = [alpha1, 1.0 - alpha1]
    flags = [False, False]
    if free_agent:
        alphas.append(0.0)
        flags.append(True)
    return validate_capacity_profile(alphas, flags)


def spread_profile(alpha1: float, n_constrained: int, free_agent: bool = False) -> CapacityProfile:
    """Give agent 1 ``alpha1`` and split the rest equally over the other constrained agents."""
    if n_constrained < 2:
        raise NoConstrainedAgent("need at least two constrained agents to vary a share")
    rest = (1.0 - alpha1) / (n_constrained - 1)
    alphas = [alpha1] + [rest] * (n_constrained - 1)
    flags = [False] * n_constrained
    if free_agent:
        alphas.append(0.0)
        flags.append(True)
    return validate_capacity_profile(alphas, flags)


@dataclass(frozen=True)
class TaskRecord:
    context: np.ndarray
    rewards: np.ndarray


@dataclass(frozen=True, eq=False)
class TaskLog:
    """Ordered counterfactual records.

    ``contexts`` is ``(n, d)`` float64, ``rewards`` is ``(n, A)`` int8 in {0, 1}.
    ``mu`` optionally carries the true conditional means (synthetic logs).
    """

    contexts: np.ndarray
    rewards: np.ndarray
    agent_names: tuple[str, ...] = ()
    mu: np.ndarray | None = field(default=None)

    def __post_init__(self):
        contexts = np.array(self.contexts, dtype=np.float64, copy=True)
        rewards = np.array(self.rewards, copy=True)
        if contexts.ndim == 1:
            contexts = contexts[:, None]
        if contexts.ndim != 2 or rewards.ndim != 2:
            raise DimensionMismatch("contexts and rewards must be 2-d tables")
        n, d = contexts.shape
        if n == 0:
            raise ParseError("task log has no records")
        if d < 1:
            raise DimensionMismatch("contexts need at least one feature")
        if rewards.shape[0] != n:
            raise DimensionMismatch(f"{n} contexts but {rewards.shape[0]} reward rows")
        if rewards.shape[1] < 2:
            raise DimensionMismatch("a task log needs at least two agents")
        if not np.all(np.isfinite(contexts)):
            raise ParseError("non-finite context value")
        if not np.all((rewards == 0) | (rewards == 1)):
            raise NonBinaryReward("rewards must be 0 or 1")
        rewards = rewards.astype(np.int8)
        names = tuple(self.agent_names) or tuple(f"agent{a + 1}" for a in range(rewards.shape[1]))
        if len(names) != rewards.shape[1]:
            raise DimensionMismatch(f"{len(names)} agent names for {rewards.shape[1]} agents")
        mu = self.mu
        if mu is not None:
            mu = np.array(mu, dtype=np.float64, copy=True)
            if mu.shape != rewards.shape:
                raise DimensionMismatch("mu table must match the reward table shape")
            mu.flags.writeable = False
        contexts.flags.writeable = False
        rewards.flags.writeable = False
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "agent_names", names)
        object.__setattr__(self, "mu", mu)

    @property
    def n_records(self) -> int:
        return self.contexts.shape[0]

    @property
    def n_agents(self) -> int:
        return self.rewards.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.contexts.shape[1]

    def __len__(self) -> int:
        return self.n_records

    def __iter__(self) -> Iterator[TaskRecord]:
        for i in range(self.n_records):
            yield TaskRecord(self.contexts[i], self.rewards[i])

    def __getitem__(self, i: int) -> TaskRecord:
        return TaskRecord(self.contexts[i], self.rewards[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TaskLog):
            return NotImplemented
        same_mu = (self.mu is None and other.mu is None) or (
            self.mu is not None and other.mu is not None and np.array_equal(self.mu, other.mu)
        )
        return (
            self.agent_names == other.agent_names
            and np.array_equal(self.contexts, other.contexts)
            and np.array_equal(self.rewards, other.rewards)
            and same_mu
        )

    __hash__ = None

    def take(self, order: Sequence[int]) -> "TaskLog":
        order = np.asarray(order, dtype=np.intp)
        mu = None if self.mu is None else self.mu[order]
        return TaskLog(self.contexts[order], self.rewards[order], self.agent_names, mu)

    def column_means(self) -> np.ndarray:
        return self.rewards.mean(axis=0)


def permute_log(log: TaskLog, seed: int) -> TaskLog:
    """Shuffle the records with numpy's PCG64 generator seeded by ``seed``."""
    order = np.random.default_rng(seed).permutation(log.n_records)
    return log.take(order)


def standardize_contexts(contexts: np.ndarray) -> np.ndarray:
    """Z-score each column; constant columns are only centred."""
    mean = contexts.mean(axis=0)
    std = contexts.std(axis=0)
    std[std == 0] = 1.0
    return (contexts - mean) / std


def add_bias(contexts: np.ndarray) -> np.ndarray:
    return np.hstack([contexts, np.ones((contexts.shape[0], 1))])


# -- CSV ingestion -------------------------------------------------------------


@dataclass(frozen=True)
class ColumnMap:
    """Names of the feature and reward columns to pick out of a CSV header."""

    features: tuple[str, ...]
    rewards: tuple[str, ...]


def _default_schema(header: list[str]) -> ColumnMap:
    first_reward = next((i for i, h in enumerate(header) if h.startswith("r_")), None)
    if first_reward is None:
        raise ParseError("header has no reward columns (expected names starting with 'r_')", row=1)
    features, rewards = header[:first_reward], header[first_reward:]
    if not features:
        raise ParseError("header has no feature columns", row=1)
    bad = [h for h in rewards if not h.startswith("r_")]
    if bad:
        raise ParseError("feature column after reward columns", row=1, column=bad[0])
    return ColumnMap(tuple(features), tuple(rewards))


def load_task_log(source, schema: ColumnMap | None = None, agent_names=None) -> TaskLog:
    """Parse the reward-log CSV from bytes, a binary stream, or a path."""
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif hasattr(source, "read"):
        raw = source.read()
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc.reason}") from None
    if not text.strip():
        raise ParseError("empty")

    reader = csv.reader(io.StringIO(text, newline=""))
    header = [h.strip() for h in next(reader)]
    if schema is None:
        schema = _default_schema(header)
    positions = {}
    for i, h in enumerate(header):
        positions.setdefault(h, i)
    try:
        f_idx = [positions[c] for c in schema.features]
        r_idx = [positions[c] for c in schema.rewards]
    except KeyError as exc:
        raise ParseError("schema column missing from header", row=1, column=exc.args[0]) from None

    contexts, rewards = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DimensionMismatch(
                f"row {line_no} has {len(row)} cells, header has {len(header)}"
            )
        x = []
        for j in f_idx:
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number", row=line_no, column=header[j]) from None
            if not math.isfinite(v):
                raise ParseError("non-finite feature value", row=line_no, column=header[j])
            x.append(v)
        r = []
        for j in r_idx:
            cell = row[j].strip()
            if cell == "0":
                r.append(0)
            elif cell == "1":
                r.append(1)
            elif cell == "":
                raise ParseError("missing reward cell", row=line_no, column=header[j])
            else:
                raise NonBinaryReward(f"reward {cell!r} is not 0 or 1", row=line_no, column=header[j])
        contexts.append(x)
        rewards.append(r)
    if not contexts:
        raise ParseError("empty: header without records")
    if agent_names is None:
        agent_names = [c[2:] if c.startswith("r_") else c for c in schema.rewards]
    return TaskLog(
        np.asarray(contexts, dtype=np.float64),
        np.asarray(rewards, dtype=np.int8),
        tuple(agent_names),
    )


def write_task_log(log: TaskLog, stream: BinaryIO) -> None:
    """Write the log in the ingestion schema; floats use ``repr`` so reloads are exact."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x{j + 1}" for j in range(log.feature_dim)]
    header += [f"r_agent{a + 1}" for a in range(log.n_agents)]
    writer.writerow(header)
    for x, r in zip(log.contexts, log.rewards):
        writer.writerow([repr(float(v)) for v in x] + [str(int(v)) for v in r])
    stream.write(buf.getvalue().encode("utf-8"))
