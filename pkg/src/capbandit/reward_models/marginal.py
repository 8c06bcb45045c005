"""Context-free running accuracy estimate for the learned non-contextual baseline."""
from __future__ import annotations


class MarginalMean:
    """Smoothed mean ``(sum + 0.5) / (count + 1)``; one pseudo-observation at 0.5."""

    def __init__(self, count: int = 0, total: float = 0.0):
        self.count = int(count)
        self.total = float(total)

    def predict(self) -> float:
        return (self.total + 0.5) / (self.count + 1)

    def update(self, r) -> None:
        self.count += 1
        self.total += r

    def state_dict(self) -> dict:
        return {"type": "marginal", "count": self.count, "total": self.total}

    @classmethod
    def from_state(cls, state: dict) -> "MarginalMean":
        return cls(state["count"], state["total"])
