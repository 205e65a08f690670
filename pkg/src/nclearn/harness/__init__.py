"""Experiment harness: configs, metrics streams, drivers and the CLI."""
from .config import ExperimentConfig, config_from_mapping, load_config, save_config
from .experiments import (
    evaluate_gap_fit,
    gap_fit_stats,
    run_bound,
    run_meta_training,
    run_ood_sweep,
    run_regularizer_comparison,
    run_single_task,
)
from .metrics import MetricsWriter, read_ndjson

__all__ = [
    "ExperimentConfig", "MetricsWriter", "config_from_mapping", "evaluate_gap_fit",
    "gap_fit_stats", "load_config", "read_ndjson", "run_bound", "run_meta_training",
    "run_ood_sweep", "run_regularizer_comparison", "run_single_task", "save_config",
]
