"""Experiment driver, configuration, persistence and the selftest suite."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import REGISTRY, get_experiment
from .records import ExperimentReport, TrialRecord, read_records
from .runner import WORKERS_ENV, report_from_files, run_experiment

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "REGISTRY", "get_experiment",
    "ExperimentReport", "TrialRecord", "read_records", "WORKERS_ENV", "report_from_files",
    "run_experiment",
]
