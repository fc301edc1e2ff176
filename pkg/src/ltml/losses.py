"""Sigmoid losses for multi-label logits with hand-derived gradients.

Every loss returns a :class:`LossReport` holding per-entry losses, the
per-entry derivative with respect to the (shifted) logit ``u``, and the
batch total ``mean_b (1/C) sum_c loss[b, c]``.  Because the total is an
average over ``B * C`` entries, the gradient of the total with respect to
``u[b, c]`` is ``grad_u[b, c] / (B * C)``.

For the negative-scaled losses (NR, ANR) the negative-branch term is
``softplus(lam * u) / lam``.  In ANR ``lam`` depends on ``u`` but is held
constant while differentiating, so its gradient is ``sigmoid(lam * u)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import ShapeMismatch, as_labels, as_logits, check_same_shape, sigmoid, softplus

BCE, FOCAL, NR, ANR = "BCE", "Focal", "NR", "ANR"
LOSS_KINDS = (BCE, FOCAL, NR, ANR)


@dataclass(frozen=True)
class LossConfig:
    kind: str = ANR
    beta: float = 10.0
    lambda_nr: float = 2.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.5
    use_bias: bool = True

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.lambda_nr < 1:
            raise ValueError("lambda_nr must be >= 1")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ValueError("focal_alpha must lie in [0, 1]")


@dataclass
class LossReport:
    per_entry_loss: np.ndarray
    grad_u: np.ndarray
    total: float
    mask: np.ndarray | None = field(default=None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.per_entry_loss.shape

    def grad_total(self) -> np.ndarray:
        """Gradient of ``total`` with respect to ``u``."""
        return self.grad_u / self.per_entry_loss.size

    def replace(self, **changes) -> "LossReport":
        return replace(self, **changes)


def reduce_total(per_entry: np.ndarray) -> float:
    """Mean over classes per sample, then mean over samples."""
    if per_entry.size == 0:
        return 0.0
    return float(per_entry.mean(axis=1).mean())


def _prepare(u, y):
    u = as_logits(u)
    y = as_labels(y)
    check_same_shape(u, y)
    return u, y.astype(np.float64)


def adaptive_lambda(u, beta: float) -> np.ndarray:
    """Per-entry negative scale ``1 + beta * (1 - sigmoid(u))``."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    u = np.asarray(u, dtype=np.float64)
    return 1.0 + beta * sigmoid(-u)


def _scaled_negative(u, y, lam) -> LossReport:
    pos = y * softplus(-u)
    neg = (1.0 - y) * softplus(lam * u) / lam
    per_entry = pos + neg
    grad = -y * sigmoid(-u) + (1.0 - y) * sigmoid(lam * u)
    return LossReport(per_entry, grad, reduce_total(per_entry))


def bce(u, y) -> LossReport:
    u, y = _prepare(u, y)
    return _scaled_negative(u, y, 1.0)


def nr_bce(u, y, cfg: LossConfig) -> LossReport:
    """BCE with every negative logit scaled by the constant ``cfg.lambda_nr``."""
    u, y = _prepare(u, y)
    if cfg.lambda_nr < 1:
        raise ValueError("lambda_nr must be >= 1")
    return _scaled_negative(u, y, float(cfg.lambda_nr))


def anr_bce(u, y, cfg: LossConfig) -> LossReport:
    """BCE whose negative branch is scaled by the adaptive factor of each entry."""
    u, y = _prepare(u, y)
    lam = adaptive_lambda(u, cfg.beta)
    return _scaled_negative(u, y, lam)


def focal(u, y, cfg: LossConfig) -> LossReport:
    u, y = _prepare(u, y)
    g, a = cfg.focal_gamma, cfg.focal_alpha
    s_pos = sigmoid(-u)  # 1 - sigmoid(u)
    s_neg = sigmoid(u)
    l_pos = softplus(-u)  # -log sigmoid(u)
    l_neg = softplus(u)  # -log(1 - sigmoid(u))
    w_pos = s_pos**g
    w_neg = s_neg**g
    per_entry = a * y * w_pos * l_pos + (1.0 - a) * (1.0 - y) * w_neg * l_neg
    grad = -a * y * w_pos * (g * s_neg * l_pos + s_pos)
    grad += (1.0 - a) * (1.0 - y) * w_neg * (g * s_pos * l_neg + s_neg)
    return LossReport(per_entry, grad, reduce_total(per_entry))


def compute_loss(u, y, cfg: LossConfig) -> LossReport:
    if cfg.kind == BCE:
        return bce(u, y)
    if cfg.kind == FOCAL:
        return focal(u, y, cfg)
    if cfg.kind == NR:
        return nr_bce(u, y, cfg)
    return anr_bce(u, y, cfg)


def frozen_lambda_entries(u, y, lambda_matrix) -> np.ndarray:
    """Per-entry scaled-negative loss with the scale matrix supplied externally."""
    u, y = _prepare(u, y)
    try:
        lam = np.broadcast_to(np.asarray(lambda_matrix, dtype=np.float64), u.shape)
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    if (lam < 1).any():
        raise ValueError("lambda entries must be >= 1")
    return y * softplus(-u) + (1.0 - y) * softplus(lam * u) / lam


def loss_value_frozen_lambda(u, y, lambda_matrix) -> float:
    return reduce_total(frozen_lambda_entries(u, y, lambda_matrix))
