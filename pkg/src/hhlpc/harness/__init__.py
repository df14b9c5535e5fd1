"""Configuration, experiment drivers, result files and the command line."""

from .config import ConfigError, ExperimentConfig, config_from_dict, config_to_dict, load_config, parse_config_text
from .experiments import ScalingResult, SweepResult, pareto_sweep, scaling_experiment
from .outputs import emit_outputs
from .runner import RunResult, RunSummary, reference_run, run_repetitions, run_simulation

__all__ = [
    "ConfigError", "ExperimentConfig", "RunResult", "RunSummary", "ScalingResult", "SweepResult",
    "config_from_dict", "config_to_dict", "emit_outputs", "load_config", "pareto_sweep",
    "parse_config_text", "reference_run", "run_repetitions", "run_simulation", "scaling_experiment",
]
