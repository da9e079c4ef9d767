"""Experiment harness: configuration, multi-seed runs, CSV output and plots."""

from .config import ExperimentConfig, parse_config
from .report import emit_plots, read_curve
from .runner import EpochRecord, aggregate, run_experiment, run_seed

__all__ = ["EpochRecord", "ExperimentConfig", "aggregate", "emit_plots", "parse_config",
           "read_curve", "run_experiment", "run_seed"]
