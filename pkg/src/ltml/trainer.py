"""Mini-batch SGD for a linear or one-hidden-layer classifier on synthetic features."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ClassStats, LtmlError, ShapeMismatch, compute_class_stats, make_rng, shift_logits
from .datagen import SyntheticDataset
from .llr import OFF, LlrConfig, k_schedule, reconsider, select_large_losses
from .losses import LossConfig, compute_loss
from .metrics import MetricsTable, evaluate_scores
from .sampler import ClassAwareSampler, SamplerConfig

LINEAR, MLP1 = "Linear", "MLP1"
MODEL_MAGIC = b"LTMLMDL1"


class NonFiniteLoss(LtmlError, FloatingPointError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    model: str = LINEAR
    hidden: int = 64
    init_scale: float = 0.01
    aug_sigma: float = 0.0
    threshold: float = 0.0
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    llr: LlrConfig = field(default_factory=LlrConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.model not in (LINEAR, MLP1):
            raise ValueError(f"unknown model kind {self.model!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Model:
    """Raw-logit classifier.  Parameters whose name starts with ``b`` are offsets."""

    kind: str
    params: dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.params["W" if self.kind == LINEAR else "W1"].shape[0]

    @property
    def num_classes(self) -> int:
        return self.params["b" if self.kind == LINEAR else "b2"].shape[0]

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatch(f"features of shape {x.shape} for a model with input dim {self.input_dim}")
        if self.kind == LINEAR:
            return x @ self.params["W"] + self.params["b"], (x,)
        pre = x @ self.params["W1"] + self.params["b1"]
        h = np.maximum(pre, 0.0)
        return h @ self.params["W2"] + self.params["b2"], (x, pre, h)

    def backward(self, cache, grad_p: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(logits)."""
        if self.kind == LINEAR:
            (x,) = cache
            return {"W": x.T @ grad_p, "b": grad_p.sum(axis=0)}
        x, pre, h = cache
        grad_h = (grad_p @ self.params["W2"].T) * (pre > 0)
        return {
            "W1": x.T @ grad_h,
            "b1": grad_h.sum(axis=0),
            "W2": h.T @ grad_p,
            "b2": grad_p.sum(axis=0),
        }

    def copy(self) -> "Model":
        return Model(self.kind, {k: v.copy() for k, v in self.params.items()})


def init_model(kind: str, input_dim: int, num_classes: int, rng: np.random.Generator,
               hidden: int = 64, scale: float = 0.01) -> Model:
    if kind == LINEAR:
        params = {
            "W": scale * rng.standard_normal((input_dim, num_classes)),
            "b": np.zeros(num_classes),
        }
    elif kind == MLP1:
        params = {
            "W1": rng.standard_normal((input_dim, hidden)) * np.sqrt(2.0 / input_dim),
            "b1": np.zeros(hidden),
            "W2": scale * rng.standard_normal((hidden, num_classes)),
            "b2": np.zeros(num_classes),
        }
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return Model(kind, params)


class SGD:
    """Classical momentum: v = m*v + g; w -= lr*v.  Decay skips offsets."""

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            w = params[name]
            if self.weight_decay and not name.startswith("b"):
                g = g + self.weight_decay * w
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            w -= self.lr * v


def batch_objective(model: Model, x, y, stats: ClassStats | None, loss_cfg: LossConfig):
    """Forward pass plus loss report for one batch; returns (report, cache, u)."""
    p, cache = model.forward_cached(x)
    u = shift_logits(p, stats) if (loss_cfg.use_bias and stats is not None) else p
    return compute_loss(u, y, loss_cfg), cache, u


class Trainer:
    """Owns the model, optimizer, sampler and RNG streams of one training run."""

    def __init__(self, dataset: SyntheticDataset, cfg: TrainConfig, stats: ClassStats | None = None,
                 model: Model | None = None, record_batches: bool = False):
        self.dataset = dataset
        self.cfg = cfg
        self.train_rows = dataset.rows("train")
        train_labels = dataset.noisy_labels[self.train_rows]
        self.stats = stats if stats is not None else compute_class_stats(train_labels)
        if model is None:
            model = init_model(cfg.model, dataset.features.shape[1], dataset.num_classes,
                               make_rng(cfg.seed, 0x1417), hidden=cfg.hidden, scale=cfg.init_scale)
        self.model = model
        self.optimizer = SGD(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
        self.sampler = ClassAwareSampler(train_labels, cfg.sampler)
        self.aug_rng = make_rng(cfg.seed, 0xA06)
        self.record_batches = record_batches
        self.batches_per_epoch = max(1, -(-len(self.train_rows) // cfg.batch_size))

    def loss_fn(self, u, y):
        return compute_loss(u, y, self.cfg.loss)

    def train_step(self, rows: np.ndarray, epoch: int) -> dict:
        cfg = self.cfg
        x = self.dataset.features[rows]
        if cfg.aug_sigma > 0:
            x = x + cfg.aug_sigma * self.aug_rng.standard_normal(x.shape)
        y = self.dataset.noisy_labels[rows]
        report, cache, u = batch_objective(self.model, x, y, self.stats, cfg.loss)

        negatives = int((y == 0).sum())
        k = 0
        selected_noisy = 0
        if cfg.llr.mode != OFF:
            k = k_schedule(epoch, negatives, cfg.llr)
            sel = select_large_losses(report, y, k, epoch)
            report = reconsider(report, u, y, sel, cfg.llr.mode, self.loss_fn)
            selected_noisy = int((sel.mask & self.dataset.noise_mask[rows]).sum())

        grad_p = report.grad_total()
        if not (np.isfinite(report.total) and np.isfinite(grad_p).all()):
            raise NonFiniteLoss(
                f"non-finite loss or gradient at epoch {epoch}",
                {"epoch": epoch, "rows": rows.tolist(), "total": float(report.total),
                 "non_finite_logits": int((~np.isfinite(u)).sum()),
                 "max_abs_finite_logit": float(np.abs(u[np.isfinite(u)]).max(initial=0.0))},
            )
        self.optimizer.step(self.model.params, self.model.backward(cache, grad_p))
        return {
            "loss": report.total,
            "k": k,
            "negatives": negatives,
            "selected_noisy": selected_noisy,
            "noisy_negatives": int(self.dataset.noise_mask[rows].sum()),
        }

    def train_epoch(self, epoch: int) -> dict:
        """One pass of ``batches_per_epoch`` resampled batches; ``epoch`` is 1-based."""
        steps = []
        for _ in range(self.batches_per_epoch):
            rows = self.train_rows[self.sampler.sample(self.cfg.batch_size)]
            steps.append(self.train_step(rows, epoch))
        k_total = sum(s["k"] for s in steps)
        hits = sum(s["selected_noisy"] for s in steps)
        noisy = sum(s["noisy_negatives"] for s in steps)
        negatives = sum(s["negatives"] for s in steps)
        log = {
            "epoch": epoch,
            "mean_loss": float(np.mean([s["loss"] for s in steps])),
            "batches": len(steps),
            "k_mean": k_total / len(steps),
            "selected": k_total,
            "selected_noisy": hits,
            "selection_precision": hits / k_total if k_total else None,
            "noise_base_rate": noisy / negatives if negatives else None,
        }
        if self.record_batches:
            log["batch_overlap"] = [[s["k"], s["selected_noisy"], s["noisy_negatives"], s["negatives"]]
                                    for s in steps]
        return log

    def fit(self, on_epoch=None, eval_split: str | None = "val") -> list[dict]:
        logs = []
        for epoch in range(1, self.cfg.epochs + 1):
            log = self.train_epoch(epoch)
            if eval_split is not None and len(self.dataset.rows(eval_split)):
                log[eval_split] = self.evaluate(eval_split).summary_row()
            logs.append(log)
            if on_epoch is not None:
                on_epoch(log)
        return logs

    def scores(self, rows) -> np.ndarray:
        p = self.model.forward(self.dataset.features[rows])
        return shift_logits(p, self.stats) if self.cfg.loss.use_bias else p

    def evaluate(self, split: str = "test") -> MetricsTable:
        return evaluate(self.model, self.dataset, self.stats, split, self.cfg.loss.use_bias, self.cfg.threshold)


def evaluate(model: Model, dataset: SyntheticDataset, stats: ClassStats, split: str = "test",
             use_bias: bool = True, threshold: float = 0.0) -> MetricsTable:
    """Metrics on shifted logits; the test split is scored against clean labels."""
    rows = dataset.rows(split)
    p = model.forward(dataset.features[rows])
    u = shift_logits(p, stats) if use_bias else p
    labels = dataset.clean_labels[rows] if split == "test" else dataset.noisy_labels[rows]
    return evaluate_scores(u, labels, stats.partition, dataset.class_names, threshold)


def save_model(path, model: Model, extra: dict | None = None) -> None:
    """Magic, u64 header length, JSON header, then float64 little-endian parameters."""
    names = sorted(model.params)
    header = {
        "kind": model.kind,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        **(extra or {}),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_model(path) -> tuple[Model, dict]:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise ValueError(f"{path} is not a model file")
    (size,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + size])
    offset = 16 + size
    params = {}
    for spec in header["params"]:
        count = int(np.prod(spec["shape"]))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        params[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
        offset += 8 * count
    return Model(header["kind"], params), header
