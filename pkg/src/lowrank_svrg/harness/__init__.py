"""Experiment harness: configs, runners and the command-line entry point."""

from lowrank_svrg.harness.config import ConfigError, ExperimentSpec, GridSpec, default_spec, load_spec, parse_spec
from lowrank_svrg.harness.runner import (
    AllTrialsDiverged,
    TrialResult,
    best_cells,
    effective_passes,
    metrics,
    run_convergence,
    run_experiment,
    run_grid,
    run_phase,
    run_stat_error,
    run_trial,
)
