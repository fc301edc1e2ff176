"""Shared containers, class statistics and seeded randomness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

HEAD, MEDIUM, TAIL = "Head", "Medium", "Tail"
SUBSETS = (HEAD, MEDIUM, TAIL)


class LtmlError(Exception):
    """Base class for library errors."""


class ShapeMismatch(LtmlError, ValueError):
    pass


class DegenerateClass(LtmlError, ValueError):
    """A class has no positives or no negatives, so its bias is undefined."""


def as_labels(labels, num_classes: int | None = None) -> np.ndarray:
    """Validate a B x C binary label matrix and return it as int8."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeMismatch(f"label matrix must be 2-D, got shape {arr.shape}")
    if num_classes is not None and arr.shape[1] != num_classes:
        raise ShapeMismatch(f"expected {num_classes} classes, got {arr.shape[1]}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("label entries must be exactly 0 or 1")
    return arr.astype(np.int8, copy=False)


def as_logits(logits, num_classes: int | None = None) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"logit matrix must be 2-D, got shape {arr.shape}")
    if num_classes is not None and arr.shape[1] != num_classes:
        raise ShapeMismatch(f"expected {num_classes} classes, got {arr.shape[1]}")
    return arr


def check_same_shape(*arrays: np.ndarray) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"shape mismatch: {sorted(shapes)}")


def sigmoid(x):
    # expit is overflow-safe in both tails
    from scipy.special import expit

    return expit(x)


def softplus(x):
    """log(1 + e^x) computed without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator; ``stream`` selects an independent substream."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PartitionThresholds:
    """Count thresholds: Head if n >= head, Tail if n <= tail, else Medium.

    ``None`` means use the tercile boundaries of the per-class counts.
    """

    head: float | None = None
    tail: float | None = None

    def resolve(self, counts: np.ndarray) -> tuple[float, float]:
        counts = np.asarray(counts, dtype=np.float64)
        t_tail = self.tail if self.tail is not None else float(np.quantile(counts, 1 / 3))
        t_head = self.head if self.head is not None else float(np.quantile(counts, 2 / 3))
        # equal default terciles (e.g. identical counts) put everything in Head
        if self.head is not None and self.tail is not None and t_tail >= t_head:
            raise ValueError(f"tail threshold {t_tail} must be below head threshold {t_head}")
        return t_head, t_tail


def partition_classes(counts, thresholds: PartitionThresholds | None = None) -> tuple[str, ...]:
    t_head, t_tail = (thresholds or PartitionThresholds()).resolve(counts)
    tags = []
    for n in np.asarray(counts, dtype=np.float64):
        if n >= t_head:
            tags.append(HEAD)
        elif n <= t_tail:
            tags.append(TAIL)
        else:
            tags.append(MEDIUM)
    return tuple(tags)


@dataclass(frozen=True, eq=False)
class ClassStats:
    total: int
    positives: np.ndarray
    bias: np.ndarray
    partition: tuple[str, ...]

    def __post_init__(self):
        for arr in (self.positives, self.bias):
            arr.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return len(self.positives)

    def members(self, subset: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.partition) == subset)

    def to_dict(self) -> dict:
        return {
            "N": int(self.total),
            "n": [int(n) for n in self.positives],
            "v": [float(v) for v in self.bias],
            "partition": list(self.partition),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassStats":
        return cls(
            total=int(data["N"]),
            positives=np.asarray(data["n"], dtype=np.int64),
            bias=np.asarray(data["v"], dtype=np.float64),
            partition=tuple(data["partition"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ClassStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def compute_class_stats(labels, thresholds: PartitionThresholds | None = None) -> ClassStats:
    """Positive counts, prior-matching logit bias log(N/n - 1), and Head/Medium/Tail tags."""
    y = as_labels(labels)
    total = y.shape[0]
    if total == 0:
        raise ValueError("label matrix is empty")
    n = y.sum(axis=0, dtype=np.int64)
    bad = np.flatnonzero((n == 0) | (n == total))
    if bad.size:
        raise DegenerateClass(f"classes {bad.tolist()} have no positives or no negatives")
    # log(N/n - 1) == log(N - n) - log(n), the latter keeps full precision
    bias = np.log((total - n).astype(np.float64)) - np.log(n.astype(np.float64))
    return ClassStats(total=total, positives=n, bias=bias, partition=partition_classes(n, thresholds))


def shift_logits(p, stats: ClassStats) -> np.ndarray:
    """u = p - v: a zero raw logit maps to the class prior n/N."""
    p = as_logits(p)
    if p.shape[1] != stats.num_classes:
        raise ShapeMismatch(f"logits have {p.shape[1]} classes, stats have {stats.num_classes}")
    return p - stats.bias


def class_names(num_classes: int) -> list[str]:
    width = max(2, len(str(num_classes - 1)))
    return [f"c{i:0{width}d}" for i in range(num_classes)]


def write_matrix_csv(path, matrix, header: Sequence[str], fmt: str | None = None) -> None:
    """Header row of column names, then one row per sample.

    Floats are written with 17 significant digits so they round-trip exactly.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] != len(header):
        raise ShapeMismatch(f"matrix shape {matrix.shape} does not fit {len(header)} columns")
    if fmt is None:
        fmt = "%d" if matrix.dtype.kind in "biu" else "%.17g"
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, matrix, fmt=fmt, delimiter=",")


def read_matrix_csv(path, dtype=np.float64) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
        data = np.loadtxt(fh, delimiter=",", dtype=dtype, ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise ShapeMismatch(f"{path}: {data.shape[1]} columns but {len(header)} header names")
    return data, header
