"""Simulation engine, synthetic logs, sweeps and metrics."""
from .engine import (
    AssignmentTrace,
    OnlineSimulation,
    RunResult,
    load_checkpoint,
    run_batched,
    run_online,
    save_checkpoint,
)
from .regret import RegretReport, compute_regret, linear_slope
from .synth import PRESETS, AgentSpec, SynthSpec, synth_generate, true_means
from .offline import OfflineResult, fitted_means, run_offline_benchmark
from .sweep import (
    BatchSweepRow,
    ExperimentConfig,
    SweepRow,
    SweepTable,
    run_batch_sweep,
    run_cell,
    run_sweep,
)
