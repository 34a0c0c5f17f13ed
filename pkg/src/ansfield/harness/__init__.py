"""Benchmark harness: dataset generation, training, baselines, metrics, CLI."""

from .baselines import (
    baseline_nearest_mention,
    baseline_random_spawn,
    baseline_topdown_qa,
)
from .config import ABLATION_PRESETS, HarnessConfig, config_hash
from .dataset import (
    DatasetRecord,
    cond_to_model,
    field_to_model,
    generate_dataset,
    load_dataset,
    model_to_field,
)
from .evaluate import EmptyInput, EvalReport, MissingModel, em_at_k, evaluate
from .train import train

__all__ = [
    "ABLATION_PRESETS",
    "DatasetRecord",
    "EmptyInput",
    "EvalReport",
    "HarnessConfig",
    "MissingModel",
    "baseline_nearest_mention",
    "baseline_random_spawn",
    "baseline_topdown_qa",
    "cond_to_model",
    "config_hash",
    "em_at_k",
    "evaluate",
    "field_to_model",
    "generate_dataset",
    "load_dataset",
    "model_to_field",
    "train",
]
