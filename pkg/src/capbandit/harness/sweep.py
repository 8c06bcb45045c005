"""Capacity sweeps over ensembles of permuted replays."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..capacity import DEFAULT_ETA
from ..domain import CapacityProfile, TaskLog, permute_log, spread_profile, validate_capacity_profile
from ..errors import InvalidSpec, ParseError, ValidationError
from ..policy import CONTEXTUAL_KINDS, ModelParams, PolicyKind
from .engine import RunResult, run_batched, run_online
from .offline import FAMILIES, run_offline_benchmark
from .synth import SynthSpec, synth_generate

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0)
DEFAULT_POLICIES = tuple(k.value for k in CONTEXTUAL_KINDS) + (PolicyKind.RANDOM.value,)


@dataclass
class ExperimentConfig:
    policies: tuple[str, ...] = DEFAULT_POLICIES
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    # explicit profiles override the alpha grid; each is a full per-agent vector
    profiles: tuple[tuple[float, ...], ...] = ()
    eta: float = DEFAULT_ETA
    runs: int = 100
    seed: int = 0
    batch_size: int = 0
    free_agent: bool = False
    model: ModelParams = field(default_factory=ModelParams)
    bias: bool = True
    standardize: bool = False
    offline: tuple[str, ...] = FAMILIES
    batch_sizes: tuple[int, ...] = ()
    regret: bool = False

    def validate(self) -> None:
        if self.runs < 1:
            raise ValidationError("runs must be >= 1", key="experiment.runs")
        if self.batch_size < 0:
            raise ValidationError("batch_size must be >= 0", key="experiment.batch_size")
        if not self.eta >= 0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}", key="experiment.eta")
        for p in self.policies:
            try:
                PolicyKind(p)
            except ValueError:
                raise ValidationError(f"unknown policy {p!r}", key="experiment.policies") from None
        for f in self.offline:
            if f not in FAMILIES:
                raise ValidationError(f"unknown offline family {f!r}", key="experiment.offline")
        for b in self.batch_sizes:
            if b < 0:
                raise ValidationError("batch sizes must be >= 0", key="experiment.batch_sizes")

    def grid(self, n_agents: int) -> list[CapacityProfile]:
        """Profiles to sweep for a log with ``n_agents`` columns."""
        free = n_agents - 1 if self.free_agent else None
        if self.profiles:
            out = []
            for alphas in self.profiles:
                if len(alphas) != n_agents:
                    raise ValidationError(f"profile {alphas} has {len(alphas)} entries for {n_agents} agents",
                                          key="experiment.profiles")
                flags = [a == free for a in range(n_agents)]
                out.append(validate_capacity_profile(alphas, flags))
            return out
        n_constrained = n_agents - (1 if self.free_agent else 0)
        return [spread_profile(a, n_constrained, self.free_agent) for a in self.alphas]


@dataclass
class SweepRow:
    policy: str
    profile: str
    mean_error: float
    std_error: float
    fractions: np.ndarray
    n_runs: int
    alpha1: float | None = None
    errors: np.ndarray | None = None
    mean_regret: float | None = None

    @property
    def sem(self) -> float:
        return self.std_error / np.sqrt(self.n_runs)


@dataclass
class SweepTable:
    rows: list[SweepRow]
    n_agents: int

    def __len__(self) -> int:
        return len(self.rows)

    def get(self, policy: str, profile: str) -> SweepRow:
        for r in self.rows:
            if r.policy == policy and r.profile == profile:
                return r
        raise KeyError((policy, profile))

    def policies(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.policy not in seen:
                seen.append(r.policy)
        return seen

    def to_csv(self, stream: BinaryIO) -> None:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "alpha_profile", "mean_error", "std_error"]
                   + [f"frac_agent_{a + 1}" for a in range(self.n_agents)])
        for r in self.rows:
            w.writerow([r.policy, r.profile, repr(float(r.mean_error)), repr(float(r.std_error))]
                       + [repr(float(f)) for f in r.fractions])
        stream.write(buf.getvalue().encode("utf-8"))

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        self.to_csv(out)
        return out.getvalue()

    @classmethod
    def from_csv(cls, source) -> "SweepTable":
        if isinstance(source, (bytes, bytearray)):
            text = bytes(source).decode("utf-8")
        elif hasattr(source, "read"):
            data = source.read()
            text = data.decode("utf-8") if isinstance(data, bytes) else data
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[:4] != ["policy", "alpha_profile", "mean_error", "std_error"]:
            raise ParseError("not a sweep table: bad header", row=1)
        n_agents = len(header) - 4
        rows = []
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(rec)}", row=i)
            try:
                nums = [float(v) for v in rec[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), row=i) from None
            rows.append(SweepRow(rec[0], rec[1], nums[0], nums[1], np.array(nums[2:]), 0,
                                 alpha1=_leading_alpha(rec[1])))
        return cls(rows, n_agents)


def _leading_alpha(label: str) -> float | None:
    try:
        return float(label.split("/")[0])
    except ValueError:
        return None


def _aggregate(policy: str, profile: CapacityProfile, results: Sequence[RunResult]) -> SweepRow:
    errors = np.array([r.error_rate for r in results])
    if np.all(errors == errors[0]):
        mean, std = float(errors[0]), 0.0
    else:
        mean, std = float(errors.mean()), float(errors.std(ddof=1))
    fractions = np.mean([r.fractions for r in results], axis=0)
    regrets = [r.regret for r in results if r.regret is not None]
    return SweepRow(policy, profile.label(), mean, std, fractions, errors.size,
                    alpha1=float(profile.alphas[0]), errors=errors,
                    mean_regret=float(np.mean(regrets)) if regrets else None)


def _one_run(log: TaskLog, kind: str, profile: CapacityProfile, seed: int, cfg: ExperimentConfig,
             batch_size: int) -> RunResult:
    permuted = permute_log(log, seed)
    if batch_size:
        return run_batched(permuted, kind, profile, seed, batch_size, cfg.eta, cfg.model,
                           cfg.bias, cfg.standardize)
    return run_online(permuted, kind, profile, seed, cfg.eta, cfg.model, cfg.bias, cfg.standardize)


def resolve_log(source, cfg: ExperimentConfig) -> TaskLog:
    """A log as given, or one drawn from a synthetic spec with the base seed."""
    if isinstance(source, TaskLog):
        return source
    if isinstance(source, SynthSpec):
        return synth_generate(source, cfg.seed)
    raise InvalidSpec(f"expected a TaskLog or SynthSpec, got {type(source).__name__}")


def run_cell(log: TaskLog, kind: str, profile: CapacityProfile, cfg: ExperimentConfig,
             jobs: int = 1, batch_size: int | None = None) -> list[RunResult]:
    """``cfg.runs`` permuted replays; run ``k`` uses seed ``cfg.seed + k``."""
    b = cfg.batch_size if batch_size is None else batch_size
    seeds = [cfg.seed + k for k in range(cfg.runs)]
    if jobs == 1:
        return [_one_run(log, kind, profile, s, cfg, b) for s in seeds]
    return Parallel(n_jobs=jobs)(delayed(_one_run)(log, kind, profile, s, cfg, b) for s in seeds)


def run_sweep(source, cfg: ExperimentConfig, jobs: int = 1) -> SweepTable:
    cfg.validate()
    data = resolve_log(source, cfg)
    rows = []
    for kind in cfg.policies:
        for profile in cfg.grid(data.n_agents):
            log.info("sweep cell %s %s (%d runs)", kind, profile.label(), cfg.runs)
            rows.append(_aggregate(kind, profile, run_cell(data, kind, profile, cfg, jobs)))
    for family in cfg.offline:
        res = run_offline_benchmark(data, family, cfg.model, cfg.bias, cfg.standardize, cfg.seed)
        rows.append(SweepRow(f"offline_{family}", "unconstrained", res.error_rate, 0.0,
                             res.fractions, 1))
    return SweepTable(rows, data.n_agents)


@dataclass
class BatchSweepRow:
    policy: str
    batch_size: int
    mean_error: float
    std_error: float
    fractions: np.ndarray
    n_runs: int


def run_batch_sweep(source, cfg: ExperimentConfig, profile: CapacityProfile,
                    batch_sizes: Sequence[int] | None = None, jobs: int = 1) -> list[BatchSweepRow]:
    """Error against batch size at one profile; a size of 0 means the whole log."""
    cfg.validate()
    data = resolve_log(source, cfg)
    sizes = [b if b else data.n_records for b in (batch_sizes or cfg.batch_sizes)]
    rows = []
    for kind in cfg.policies:
        for b in sizes:
            res = run_cell(data, kind, profile, cfg, jobs, batch_size=b)
            agg = _aggregate(kind, profile, res)
            rows.append(BatchSweepRow(kind, b, agg.mean_error, agg.std_error, agg.fractions, agg.n_runs))
    return rows


def write_batch_sweep(rows: Sequence[BatchSweepRow], stream: BinaryIO) -> None:
    """CSV ``policy,batch_size,mean_error,std_error,frac_agent_1..A``."""
    n_agents = rows[0].fractions.size if rows else 0
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "batch_size", "mean_error", "std_error"]
               + [f"frac_agent_{a + 1}" for a in range(n_agents)])
    for r in rows:
        w.writerow([r.policy, r.batch_size, repr(r.mean_error), repr(r.std_error)]
                   + [repr(float(f)) for f in r.fractions])
    stream.write(buf.getvalue().encode("utf-8"))
