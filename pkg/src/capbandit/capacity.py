"""Virtual queues that enforce long-run capacity targets."""
from __future__ import annotations

import csv
import io
from typing import BinaryIO

import numpy as np

from .domain import CapacityProfile
from .errors import CountMismatch, InvalidAgent, ValidationError

DEFAULT_ETA = 0.5


class QueueBank:
    """Per-agent backlog ``q[a]`` of assignments above the target share.

    Free (unconstrained) agents never accumulate backlog.
    """

    def __init__(self, profile: CapacityProfile, eta: float = DEFAULT_ETA, q=None):
        if not eta >= 0:
            raise ValidationError(f"queue penalty must be >= 0, got {eta}", key="eta")
        self.profile = profile
        self.eta = float(eta)
        self._alpha = profile.as_array()
        self._constrained = profile.constrained
        self.q = np.zeros(profile.n_agents) if q is None else np.array(q, dtype=float)
        self.q[~self._constrained] = 0.0

    @property
    def n_agents(self) -> int:
        return self.q.size

    def penalties(self) -> np.ndarray:
        return self.eta * self.q

    def step(self, selected: int) -> None:
        if not 0 <= selected < self.n_agents:
            raise InvalidAgent(f"agent index {selected} out of range for {self.n_agents} agents")
        # unconstrained agents have alpha 0 and never get the increment
        q = self.q - self._alpha
        if self._constrained[selected]:
            q[selected] += 1.0
        np.maximum(q, 0.0, out=q)
        self.q = q

    def batch_step(self, counts, batch_size: int) -> None:
        counts = np.asarray(counts)
        if counts.shape != (self.n_agents,) or int(counts.sum()) != batch_size:
            raise CountMismatch(f"counts {counts.tolist()} do not sum to batch size {batch_size}")
        # same operation order as step() so a batch of one matches it bitwise
        q = self.q - batch_size * self._alpha
        q += np.where(self._constrained, counts, 0)
        self.q = np.maximum(q, 0.0)

    def copy(self) -> "QueueBank":
        return QueueBank(self.profile, self.eta, self.q)


def queue_step(qb: QueueBank, selected: int) -> QueueBank:
    out = qb.copy()
    out.step(selected)
    return out


def batch_queue_step(qb: QueueBank, counts, batch_size: int) -> QueueBank:
    out = qb.copy()
    out.batch_step(counts, batch_size)
    return out


def write_queue_trajectory(queues: np.ndarray, stream: BinaryIO, start: int = 1) -> None:
    """CSV ``t,q_1,...,q_A``; row ``t`` is the queue state seen at round ``t``."""
    queues = np.asarray(queues)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"q_{a + 1}" for a in range(queues.shape[1])])
    for t, row in enumerate(queues, start=start):
        w.writerow([t] + [repr(float(v)) for v in row])
    stream.write(buf.getvalue().encode("utf-8"))
