"""Command-line entry point: ``capbandit COMMAND --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .batch import write_batch_plans
from .capacity import write_queue_trajectory
from .config import RunConfig, explain, parse_config, parse_config_text
from .domain import TaskLog, load_task_log, permute_log, write_task_log
from .errors import CapbanditError, ValidationError
from .harness.engine import run_batched, run_online
from .harness.offline import fitted_means, run_offline_benchmark
from .harness.sweep import SweepTable, run_batch_sweep, run_sweep, write_batch_sweep
from .harness.synth import synth_generate
from .plotting import emit_plot
from .policy import oracle_constrained_general, oracle_unconstrained, random_value, write_oracle_csv

log = logging.getLogger("capbandit")

COMMANDS = ("synth", "simulate", "sweep", "batch-sim", "oracle", "offline", "plot")


class Outputs:
    """Collects artifacts under the out directory and writes the manifest last."""

    def __init__(self, out: Path, command: str, cfg: RunConfig, seed: int):
        self.out = out
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.artifacts: list[dict] = []
        self.extra: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, data: bytes) -> Path:
        path = self.out / name
        path.write_bytes(data)
        self.artifacts.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def write_with(self, name: str, writer, *args) -> Path:
        buf = io.BytesIO()
        writer(*args, buf)
        return self.write(name, buf.getvalue())

    def add_file(self, path: Path) -> None:
        data = path.read_bytes()
        self.artifacts.append({"path": path.name, "sha256": hashlib.sha256(data).hexdigest()})

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "config_sha256": self.cfg.sha256,
            "seed": self.seed,
            "artifacts": self.artifacts,
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load(cfg: RunConfig, seed: int) -> TaskLog:
    if cfg.data_path is not None:
        with open(cfg.data_path, "rb") as fh:
            data = load_task_log(fh, agent_names=cfg.agent_names or None)
        log.info("loaded %d records, d=%d, A=%d", data.n_records, data.feature_dim, data.n_agents)
        return data
    if cfg.synth is None:
        raise ValidationError("give [data] path or a [synth] section", key="data.path")
    return synth_generate(cfg.synth, seed)


def _row(values) -> str:
    return ",".join(values) + "\n"


def cmd_synth(cfg: RunConfig, out: Outputs, args) -> None:
    if cfg.synth is None:
        raise ValidationError("synth needs a [synth] section", key="synth")
    data = synth_generate(cfg.synth, out.seed)
    out.write_with("log.csv", write_task_log, data)
    lines = [_row(f"mu_{a + 1}" for a in range(data.n_agents))]
    lines += [_row(repr(float(v)) for v in row) for row in data.mu]
    out.write("true_means.csv", "".join(lines).encode("utf-8"))


def cmd_simulate(cfg: RunConfig, out: Outputs, args) -> None:
    data = _load(cfg, out.seed)
    profile = cfg.profile(data.n_agents)
    exp = cfg.experiment
    permuted = permute_log(data, out.seed)
    lines = [_row(["policy", "alpha_profile", "error_rate", "regret", "n_updates"]
                  + [f"frac_agent_{a + 1}" for a in range(data.n_agents)])]
    for kind in exp.policies:
        if exp.batch_size:
            res = run_batched(permuted, kind, profile, out.seed, exp.batch_size, exp.eta, exp.model,
                              exp.bias, exp.standardize, keep_trace=args.trace)
        else:
            res = run_online(permuted, kind, profile, out.seed, exp.eta, exp.model, exp.bias,
                             exp.standardize, keep_trace=args.trace)
        regret = "" if res.regret is None else repr(res.regret)
        lines.append(_row([kind, profile.label(), repr(res.error_rate), regret, str(res.n_updates)]
                          + [repr(float(f)) for f in res.fractions]))
        if args.trace:
            out.write_with(f"trace_{kind}.csv", res.trace.write_csv)
            out.write_with(f"queues_{kind}.csv", write_queue_trajectory, res.trace.queues)
    out.write("simulate.csv", "".join(lines).encode("utf-8"))


def cmd_sweep(cfg: RunConfig, out: Outputs, args) -> None:
    data = _load(cfg, out.seed)
    exp = dataclasses.replace(cfg.experiment, seed=out.seed)
    table = run_sweep(data, exp, jobs=args.jobs)
    out.write("sweep.csv", table.to_bytes())
    if cfg.experiment.regret and data.mu is not None:
        lines = [_row(["policy", "alpha_profile", "mean_regret"])]
        lines += [_row([r.policy, r.profile, repr(r.mean_regret)]) for r in table.rows
                  if r.mean_regret is not None]
        out.write("regret.csv", "".join(lines).encode("utf-8"))


def cmd_batch_sim(cfg: RunConfig, out: Outputs, args) -> None:
    data = _load(cfg, out.seed)
    exp = dataclasses.replace(cfg.experiment, seed=out.seed)
    profile = cfg.profile(data.n_agents)
    rows = run_batch_sweep(data, exp, profile, jobs=args.jobs)
    out.write_with("batch_sweep.csv", write_batch_sweep, rows)
    if args.trace:
        sizes = [b for b in (exp.batch_size, *exp.batch_sizes) if b != 1]
        b = sizes[0] or data.n_records
        kind = next((k for k in exp.policies if k not in ("random", "oracle_constrained")), None)
        if kind is not None:
            _, plans = run_batched(permute_log(data, out.seed), kind, profile, out.seed, b, exp.eta,
                                   exp.model, exp.bias, exp.standardize, keep_plans=True)
            out.write_with(f"batch_plans_{kind}.csv", write_batch_plans, plans)


def cmd_oracle(cfg: RunConfig, out: Outputs, args) -> None:
    data = _load(cfg, out.seed)
    profile = cfg.profile(data.n_agents)
    mu, approximate = data.mu, False
    if mu is None:
        # logged data: stand in fitted means from the full log
        mu = fitted_means(data, "logistic", cfg.experiment.model, cfg.experiment.bias,
                          cfg.experiment.standardize)
        approximate = True
    res = oracle_constrained_general(mu, profile)
    _, free_value = oracle_unconstrained(mu)
    out.write_with("oracle.csv", write_oracle_csv, res.assignment, mu)
    summary = {
        "alpha_profile": profile.label(),
        "approximate_means": approximate,
        "constrained_value": res.value,
        "unconstrained_value": free_value,
        "random_value": random_value(mu, profile),
        "counts": res.counts.tolist(),
        "shadow_prices": res.shadow_prices.lambdas.tolist(),
    }
    out.write("oracle_summary.json", (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())


def cmd_offline(cfg: RunConfig, out: Outputs, args) -> None:
    data = _load(cfg, out.seed)
    exp = cfg.experiment
    lines = [_row(["family", "error_rate"] + [f"frac_agent_{a + 1}" for a in range(data.n_agents)])]
    for family in exp.offline:
        res = run_offline_benchmark(data, family, exp.model, exp.bias, exp.standardize, out.seed)
        lines.append(_row([family, repr(res.error_rate)] + [repr(float(f)) for f in res.fractions]))
    out.write("offline.csv", "".join(lines).encode("utf-8"))


def cmd_plot(cfg: RunConfig, out: Outputs, args) -> None:
    source = Path(args.table) if args.table else out.out / "sweep.csv"
    table = SweepTable.from_csv(source)
    p = cfg.plot
    path = emit_plot(table, out.out / "sweep.svg", p.title, p.xlabel, p.ylabel, p.width, p.height)
    out.add_file(path)


HANDLERS = {
    "synth": cmd_synth,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "batch-sim": cmd_batch_sim,
    "oracle": cmd_oracle,
    "offline": cmd_offline,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capbandit", description=__doc__)
    parser.add_argument("command", nargs="?", choices=COMMANDS)
    parser.add_argument("table", nargs="?", help="plot: sweep CSV to draw (default OUT/sweep.csv)")
    parser.add_argument("--config", help="INI experiment file; omitted means all defaults")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, help="base seed; overrides [experiment] seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel runs within a sweep")
    parser.add_argument("--explain", action="store_true", help="print every default with its rationale")
    parser.add_argument("--trace", action="store_true", help="write per-round traces")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("CAPBANDIT_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.explain:
        sys.stdout.write(explain())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: UsageError: a command is required", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config) if args.config else parse_config_text("")
        if args.jobs < 1:
            raise ValidationError("must be >= 1", key="--jobs")
        seed = cfg.experiment.seed if args.seed is None else args.seed
        out = Outputs(Path(args.out), args.command, cfg, seed)
        HANDLERS[args.command](cfg, out, args)
        out.finish()
    except (CapbanditError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
