"""INI experiment configuration with strict keys and typed defaults.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` starts
a comment. Lists are comma separated; explicit capacity profiles
are ``;``-separated lists of comma-separated shares. Agent specs for the
synthetic generator go in ``[agent.NAME]`` sections, in file order.

Sections and keys are listed in :data:`SCHEMA`; anything else is an error.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .domain import CapacityProfile, spread_profile, two_agent_profile, validate_capacity_profile
from .errors import ConfigTypeError, InvalidSpec, ProfileError, UnknownKey, ValidationError
from .harness.sweep import DEFAULT_ALPHAS, DEFAULT_POLICIES, ExperimentConfig
from .harness.synth import PRESETS, AgentSpec, SynthSpec
from .policy import ModelParams


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    v = float(s.strip())
    if not math.isfinite(v):
        raise ValueError(f"not finite: {s!r}")
    return v


def _str(s: str) -> str:
    return s.strip()


def _list(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        return tuple(conv(p) for p in s.split(",") if p.strip())
    return parse


def _profiles(s: str) -> tuple:
    return tuple(_list(_float)(chunk) for chunk in s.split(";") if chunk.strip())


# key -> (parser, default, rationale shown by --explain)
SCHEMA: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "data": {
        "path": (_str, None, "CSV reward log x1..xd,r_agent1..r_agentA; omit to use [synth]"),
        "agent_names": (_list(_str), (), "display names; the CSV header carries none"),
        "bias": (_bool, True, "append a constant 1 feature so the logistic link has an intercept"),
        "standardize": (_bool, False, "z-score contexts before modeling; off because source practice is unstated"),
    },
    "synth": {
        "preset": (_str, "", f"one of {sorted(PRESETS)}; overrides explicit agents"),
        "n_tasks": (_int, 5000, "records to draw"),
        "dim": (_int, 1, "context dimension"),
        "law": (_str, "uniform", "uniform box or gaussian contexts"),
        "low": (_float, -1.0, "uniform lower bound, or gaussian mean"),
        "high": (_float, 1.0, "uniform upper bound, or gaussian standard deviation"),
    },
    "agent": {
        "kind": (_str, "logistic", "logistic, constant or checkerboard accuracy surface"),
        "weights": (_list(_float), (), "logistic slope per context feature"),
        "intercept": (_float, 0.0, "logistic offset"),
        "p": (_float, 0.5, "constant accuracy"),
        "cells": (_int, 2, "checkerboard cells per axis"),
        "high": (_float, 0.9, "checkerboard accuracy on matching cells"),
        "low": (_float, 0.3, "checkerboard accuracy elsewhere"),
        "phase": (_int, 0, "checkerboard cell parity that is accurate"),
    },
    "experiment": {
        "policies": (_list(_str), DEFAULT_POLICIES, "four contextual learners plus the random split"),
        "alphas": (_list(_float), DEFAULT_ALPHAS, "agent-1 share grid: the interior points plus both endpoints"),
        "profiles": (_profiles, (), "explicit per-agent share vectors; override the alpha grid"),
        "alpha": (_list(_float), (0.5,), "profile for simulate/batch-sim/oracle: agent-1 share or full vector"),
        "eta": (_float, 0.5, "queue penalty weight used in the reference experiments; must be >= 0"),
        "runs": (_int, 100, "randomized permutations of the task sequence per cell"),
        "seed": (_int, 0, "base seed; run k uses seed + k"),
        "batch_size": (_int, 0, "0 assigns online; B >= 1 assigns B tasks per matching"),
        "batch_sizes": (_list(_int), (1, 10, 100, 1000, 0), "batch-size sweep; 0 stands for the whole log"),
        "free_agent": (_bool, False, "treat the last agent as uncapped with no queue"),
        "offline": (_list(_str), ("logistic", "tree"), "full-information benchmark families"),
        "regret": (_bool, False, "also report modified regret on synthetic logs"),
    },
    "model": {
        "kappa": (_float, 0.5, "Thompson exploration scale on the Laplace covariance"),
        "prior_precision": (_float, 1.0, "Gaussian prior precision of logistic weights"),
        "n_trees": (_int, 20, "bootstrap trees per agent"),
        "max_depth": (_int, 3, "tree depth limit"),
        "min_leaf": (_int, 10, "minimum samples per tree leaf"),
        "refit_period": (_int, 20, "updates between ensemble refits"),
        "prior_mean": (_float, 0.5, "tree prediction before the first fit"),
    },
    "plot": {
        "title": (_str, "", "figure title"),
        "xlabel": (_str, "", "x axis label; defaults to the agent-1 share"),
        "ylabel": (_str, "error rate", "y axis label"),
        "width": (_float, 6.0, "figure width in inches"),
        "height": (_float, 4.0, "figure height in inches"),
    },
}


@dataclass
class PlotOptions:
    title: str = ""
    xlabel: str = ""
    ylabel: str = "error rate"
    width: float = 6.0
    height: float = 4.0


@dataclass
class RunConfig:
    experiment: ExperimentConfig
    data_path: Path | None = None
    agent_names: tuple[str, ...] = ()
    synth: SynthSpec | None = None
    alpha: tuple[float, ...] = (0.5,)
    plot: PlotOptions = field(default_factory=PlotOptions)
    sha256: str = ""

    def profile(self, n_agents: int) -> CapacityProfile:
        """The single profile used by simulate, batch-sim and oracle."""
        free = self.experiment.free_agent
        try:
            if len(self.alpha) == 1:
                if n_agents - free == 2:
                    return two_agent_profile(self.alpha[0], free)
                return spread_profile(self.alpha[0], n_agents - free, free)
            if len(self.alpha) != n_agents:
                raise ValidationError(f"{len(self.alpha)} shares for {n_agents} agents", key="experiment.alpha")
            flags = [free and a == n_agents - 1 for a in range(n_agents)]
            return validate_capacity_profile(self.alpha, flags)
        except ProfileError as exc:
            raise ValidationError(str(exc), key="experiment.alpha") from None


def defaults() -> dict[str, dict[str, Any]]:
    return {sec: {k: v[1] for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def explain() -> str:
    """Human-readable table of every key, its default and why."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec if sec != 'agent' else 'agent.NAME'}]")
        width = max(len(k) for k in keys)
        for k, (_, default, why) in keys.items():
            shown = ", ".join(map(str, default)) if isinstance(default, tuple) else default
            lines.append(f"  {k.ljust(width)} = {shown!s:<28} # {why}")
        lines.append("")
    return "\n".join(lines)


def _section_schema(section: str):
    if section.startswith("agent."):
        return SCHEMA["agent"]
    if section in SCHEMA and section != "agent":
        return SCHEMA[section]
    raise UnknownKey("unknown section", key=section)


def _read(text: str) -> dict[str, dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#",), default_section="\x00")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigTypeError(str(exc).splitlines()[0]) from None
    out: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        schema = _section_schema(section)
        values = {}
        for key, raw in parser.items(section):
            if key not in schema:
                raise UnknownKey("unknown key", key=f"{section}.{key}")
            conv = schema[key][0]
            try:
                values[key] = conv(raw)
            except ValueError as exc:
                raise ConfigTypeError(str(exc), key=f"{section}.{key}") from None
        out[section] = values
    return out


def _synth_spec(values: dict, agents: list[tuple[str, dict]], free_agent: bool) -> SynthSpec | None:
    syn = {**defaults()["synth"], **values}
    if syn["preset"]:
        if syn["preset"] not in PRESETS:
            raise ValidationError(f"unknown preset {syn['preset']!r}", key="synth.preset")
        spec = PRESETS[syn["preset"]](syn["n_tasks"])
        return SynthSpec(spec.dim, spec.n_tasks, spec.agents, spec.law, spec.low, spec.high,
                         free_agent or spec.free_agent)
    if not agents:
        return None
    specs = []
    for name, vals in agents:
        a = {**defaults()["agent"], **vals}
        specs.append(AgentSpec(a["kind"], tuple(a["weights"]), a["intercept"], a["p"], a["cells"],
                               a["high"], a["low"], a["phase"], name))
    return SynthSpec(syn["dim"], syn["n_tasks"], tuple(specs), syn["law"], syn["low"], syn["high"],
                     free_agent)


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    raw = _read(text)
    d = defaults()
    data = {**d["data"], **raw.get("data", {})}
    exp = {**d["experiment"], **raw.get("experiment", {})}
    mod = {**d["model"], **raw.get("model", {})}
    plot = {**d["plot"], **raw.get("plot", {})}

    if exp["eta"] < 0:
        raise ValidationError(f"must be >= 0, got {exp['eta']}", key="experiment.eta")
    if exp["runs"] < 1:
        raise ValidationError("must be >= 1", key="experiment.runs")
    if exp["batch_size"] < 0:
        raise ValidationError("must be >= 0", key="experiment.batch_size")
    for k in ("n_trees", "max_depth", "min_leaf", "refit_period"):
        if mod[k] < 1:
            raise ValidationError("must be >= 1", key=f"model.{k}")
    if mod["kappa"] < 0 or mod["prior_precision"] <= 0:
        raise ValidationError("kappa must be >= 0 and prior_precision > 0", key="model")

    cfg = ExperimentConfig(
        policies=tuple(exp["policies"]), alphas=tuple(exp["alphas"]), profiles=tuple(exp["profiles"]),
        eta=exp["eta"], runs=exp["runs"], seed=exp["seed"], batch_size=exp["batch_size"],
        free_agent=exp["free_agent"], model=ModelParams(**mod), bias=data["bias"],
        standardize=data["standardize"], offline=tuple(exp["offline"]),
        batch_sizes=tuple(exp["batch_sizes"]), regret=exp["regret"],
    )
    try:
        cfg.validate()
    except ProfileError as exc:
        raise ValidationError(str(exc), key="experiment") from None
    for a in cfg.alphas:
        if not 0.0 <= a <= 1.0:
            raise ValidationError(f"share {a} outside [0, 1]", key="experiment.alphas")

    agents = [(s[len("agent."):], v) for s, v in raw.items() if s.startswith("agent.")]
    synth = _synth_spec(raw.get("synth", {}), agents, cfg.free_agent)
    if synth is not None:
        try:
            synth.validate()
        except InvalidSpec as exc:
            raise ValidationError(str(exc), key="synth") from None

    path = Path(data["path"]) if data["path"] else None
    if path is not None and not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return RunConfig(cfg, path, tuple(data["agent_names"]), synth, tuple(exp["alpha"]),
                     PlotOptions(**plot), hashlib.sha256(text.encode("utf-8")).hexdigest())


def parse_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config_text(text, path.parent)
