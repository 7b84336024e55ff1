from .config import ExperimentConfig, build_problem, build_solver_config, load_config
from .plot import curves_from_csv, emit_svg
from .runner import AGGREGATE_COLUMNS, TRIAL_COLUMNS, aggregate_trials, compare, run_experiment

__all__ = [
    "AGGREGATE_COLUMNS",
    "ExperimentConfig",
    "TRIAL_COLUMNS",
    "aggregate_trials",
    "build_problem",
    "build_solver_config",
    "compare",
    "curves_from_csv",
    "emit_svg",
    "load_config",
    "run_experiment",
]
