"""Adaptive negative regularization and large-loss reconsideration for
long-tailed multi-label classification, exercised on synthetic data."""

from .core import ClassStats, compute_class_stats, shift_logits
from .losses import LossConfig, LossReport, adaptive_lambda, anr_bce, bce, compute_loss, focal, nr_bce
from .llr import LlrConfig, apply_lla, apply_llm, k_schedule, select_large_losses
from .metrics import MetricsTable, auc, bacc
from .datagen import DatasetConfig, SyntheticDataset, generate
from .sampler import ClassAwareSampler, SamplerConfig
from .trainer import TrainConfig, Trainer

__version__ = "0.1.0"

__all__ = [
    "ClassAwareSampler",
    "ClassStats",
    "DatasetConfig",
    "LlrConfig",
    "LossConfig",
    "LossReport",
    "MetricsTable",
    "SamplerConfig",
    "SyntheticDataset",
    "TrainConfig",
    "Trainer",
    "adaptive_lambda",
    "anr_bce",
    "apply_lla",
    "apply_llm",
    "auc",
    "bacc",
    "bce",
    "compute_class_stats",
    "compute_loss",
    "focal",
    "generate",
    "k_schedule",
    "nr_bce",
    "select_large_losses",
    "shift_logits",
]
