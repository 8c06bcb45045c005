"""Static SVG figures of error against capacity."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import EmptyTable  # noqa: E402
from .harness.sweep import SweepTable  # noqa: E402

RANDOM = "random"
OFFLINE_PREFIX = "offline_"


def _x_positions(table: SweepTable, rows) -> tuple[np.ndarray, bool]:
    """Agent-1 share when every capacity label starts with one, else profile index."""
    shares = [r.alpha1 for r in rows]
    if all(s is not None for s in shares):
        return np.array(shares, dtype=float), True
    labels = []
    for r in table.rows:
        if not r.policy.startswith(OFFLINE_PREFIX) and r.profile not in labels:
            labels.append(r.profile)
    return np.array([labels.index(r.profile) for r in rows], dtype=float), False


def emit_plot(table: SweepTable, path, title: str = "", xlabel: str = "",
              ylabel: str = "error rate", width: float = 6.0, height: float = 4.0) -> Path:
    """Write one series per policy; byte-identical output for identical input.

    The random baseline is dashed and offline benchmarks are dotted
    horizontal lines. A series with a single point is drawn as a marker.
    """
    if not table.rows:
        raise EmptyTable("sweep table has no rows")
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": "capbandit", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(width, height))
        online = [p for p in table.policies() if not p.startswith(OFFLINE_PREFIX)]
        span = []
        share_axis = True
        for policy in online:
            rows = [r for r in table.rows if r.policy == policy]
            x, share_axis_here = _x_positions(table, rows)
            share_axis = share_axis and share_axis_here
            y = np.array([r.mean_error for r in rows])
            order = np.argsort(x, kind="stable")
            x, y = x[order], y[order]
            span.extend(x.tolist())
            style = "--" if policy == RANDOM else "-"
            if x.size == 1:
                (line,) = ax.plot(x, y, linestyle="none", marker="o", label=policy)
            else:
                (line,) = ax.plot(x, y, linestyle=style, marker="o", markersize=3, label=policy)
            line.set_gid(f"series-{policy}")
        lo, hi = (min(span), max(span)) if span else (0.0, 1.0)
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        for policy in table.policies():
            if not policy.startswith(OFFLINE_PREFIX):
                continue
            err = next(r.mean_error for r in table.rows if r.policy == policy)
            (line,) = ax.plot([lo, hi], [err, err], linestyle=":", label=policy)
            line.set_gid(f"series-{policy}")
        ax.set_xlabel(xlabel or ("capacity of agent 1" if share_axis else "capacity profile"))
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
