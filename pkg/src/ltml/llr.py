"""Large-loss reconsideration of suspected false negatives.

Within each batch the ``k`` negative-labelled (sample, class) entries with
the largest loss are treated as likely annotation misses.  They are either
dropped from the loss (abandoning) or relabelled positive for that batch
only (modifying).  ``k`` grows linearly after a warm-up period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import LtmlError, ShapeMismatch, as_labels
from .losses import LossReport, reduce_total

OFF, LLA, LLM = "Off", "LLA", "LLM"
LLR_MODES = (OFF, LLA, LLM)


class SelectionOnPositive(LtmlError, ValueError):
    pass


@dataclass(frozen=True)
class LlrConfig:
    mode: str = OFF
    rho_max: float = 0.02
    warmup_epochs: int = 1
    ramp_epochs: int = 5

    def __post_init__(self):
        if self.mode not in LLR_MODES:
            raise ValueError(f"unknown LLR mode {self.mode!r}; expected one of {LLR_MODES}")
        if not 0.0 <= self.rho_max <= 1.0:
            raise ValueError("rho_max must lie in [0, 1]")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.ramp_epochs < 1:
            raise ValueError("ramp_epochs must be >= 1")


@dataclass(frozen=True)
class LlrSelection:
    mask: np.ndarray
    k: int
    epoch: int = 0


def reconsider_fraction(epoch: int, cfg: LlrConfig) -> float:
    ramp = (epoch - cfg.warmup_epochs) / cfg.ramp_epochs
    return cfg.rho_max * min(max(ramp, 0.0), 1.0)


def k_schedule(epoch: int, negatives_in_batch: int, cfg: LlrConfig) -> int:
    """Number of negative entries to reconsider in a batch at ``epoch`` (1-based)."""
    if negatives_in_batch < 0:
        raise ValueError("negatives_in_batch must be >= 0")
    if cfg.mode == OFF:
        return 0
    target = reconsider_fraction(epoch, cfg) * negatives_in_batch
    # guard against 0.02 * 1000 landing a hair above 20
    return min(negatives_in_batch, math.ceil(target - 1e-9))


def select_large_losses(report: LossReport, y, k: int, epoch: int = 0) -> LlrSelection:
    """Mask the ``k`` largest-loss entries among those labelled 0.

    Equal losses are resolved in row-major (row, col) order.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    y = as_labels(y)
    if y.shape != report.shape:
        raise ShapeMismatch(f"labels {y.shape} vs loss report {report.shape}")
    neg_idx = np.flatnonzero(y.ravel() == 0)
    k = min(k, neg_idx.size)
    mask = np.zeros(y.shape, dtype=bool)
    if k:
        losses = report.per_entry_loss.ravel()[neg_idx]
        order = np.argsort(-losses, kind="stable")
        mask.ravel()[neg_idx[order[:k]]] = True
    return LlrSelection(mask=mask, k=int(k), epoch=epoch)


def apply_lla(report: LossReport, sel: LlrSelection) -> LossReport:
    """Zero the loss and gradient of the selected entries."""
    if sel.mask.shape != report.shape:
        raise ShapeMismatch(f"selection {sel.mask.shape} vs loss report {report.shape}")
    keep = ~sel.mask
    per_entry = report.per_entry_loss * keep
    grad = report.grad_u * keep
    return LossReport(per_entry, grad, reduce_total(per_entry), mask=sel.mask)


def apply_llm(u, y, sel: LlrSelection, loss_fn: Callable[[np.ndarray, np.ndarray], LossReport]) -> LossReport:
    """Re-score the batch with the selected negatives relabelled positive.

    ``y`` itself is left untouched.
    """
    y = as_labels(y)
    if sel.mask.shape != y.shape:
        raise ShapeMismatch(f"selection {sel.mask.shape} vs labels {y.shape}")
    if (sel.mask & (y == 1)).any():
        raise SelectionOnPositive("selection mask covers entries already labelled positive")
    y_mod = y.copy()
    y_mod[sel.mask] = 1
    report = loss_fn(u, y_mod)
    report.mask = sel.mask
    return report


def reconsider(report: LossReport, u, y, sel: LlrSelection, mode: str, loss_fn) -> LossReport:
    if mode == LLA:
        return apply_lla(report, sel)
    if mode == LLM:
        return apply_llm(u, y, sel, loss_fn)
    return report
