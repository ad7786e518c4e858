"""Federated learning with structural knowledge collaboration, as a deterministic simulator."""

from .config import ExperimentConfig, parse_config
from .simulator import evaluate, rounds_to_target, run_experiment, simulate

__all__ = ["ExperimentConfig", "parse_config", "simulate", "run_experiment", "evaluate", "rounds_to_target"]
