"""Per-class balanced accuracy and ROC-AUC, with Head/Medium/Tail means."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SUBSETS, LtmlError, ShapeMismatch

METRICS = ("bacc", "auc")
AGGREGATES = ("Total",) + SUBSETS


class UndefinedMetric(LtmlError, ValueError):
    pass


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeMismatch(f"{s.size} scores vs {y.size} labels")
    y = y.astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetric(f"need both classes present, got {n_pos} positives of {y.size}")
    return s, y


def bacc(scores, labels, threshold: float = 0.0) -> float:
    """Mean of sensitivity and specificity; predicted positive iff score > threshold."""
    s, y = _binary(scores, labels)
    pred = s > threshold
    sensitivity = (pred & y).sum() / y.sum()
    specificity = (~pred & ~y).sum() / (~y).sum()
    return float(0.5 * (sensitivity + specificity))


def average_ranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing their mean rank."""
    values = np.asarray(values)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    # rank of the last member of each tie group, then step back to the group mean
    upper = np.cumsum(counts)
    mean_rank = upper - (counts - 1) / 2.0
    return mean_rank[inverse.ravel()]


def auc(scores, labels) -> float:
    """Mann-Whitney estimate P(s+ > s-) + 0.5 P(s+ = s-), in O(n log n)."""
    s, y = _binary(scores, labels)
    ranks = average_ranks(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u_stat = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


@dataclass
class MetricsTable:
    class_names: list[str]
    partition: tuple[str, ...]
    per_class: dict[str, np.ndarray]
    aggregates: dict[str, dict[str, float | None]]
    excluded: list[str] = field(default_factory=list)

    def summary_row(self) -> dict[str, float | None]:
        """Flat Table-1 style row: bacc_Total ... auc_Tail."""
        return {f"{m}_{a}": self.aggregates[m][a] for m in METRICS for a in AGGREGATES}

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "name": name,
                    "subset": subset,
                    **{m: _clean(self.per_class[m][i]) for m in METRICS},
                }
                for i, (name, subset) in enumerate(zip(self.class_names, self.partition))
            ],
            "aggregates": self.aggregates,
            "excluded": self.excluded,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        """One row per class, then one row per aggregate (Total/Head/Medium/Tail)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["name", "subset", "bacc", "auc"])
            for i, (name, subset) in enumerate(zip(self.class_names, self.partition)):
                writer.writerow([name, subset, *(_fmt(self.per_class[m][i]) for m in METRICS)])
            for a in AGGREGATES:
                writer.writerow([a, "aggregate", *(_fmt(self.aggregates[m][a]) for m in METRICS)])


def _clean(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


def _fmt(x) -> str:
    x = _clean(x)
    return "" if x is None else repr(x)


def aggregate(per_class: dict[str, np.ndarray], partition, class_names=None) -> MetricsTable:
    """Unweighted means per subset; NaN entries (undefined classes) are skipped and listed."""
    partition = tuple(partition)
    tags = np.asarray(partition)
    names = list(class_names) if class_names is not None else [str(i) for i in range(len(partition))]
    per_class = {m: np.asarray(per_class[m], dtype=np.float64) for m in METRICS}
    for m in METRICS:
        if per_class[m].shape != (len(partition),):
            raise ShapeMismatch(f"{m}: {per_class[m].shape[0]} values for {len(partition)} classes")
    undefined = np.zeros(len(partition), dtype=bool)
    for m in METRICS:
        undefined |= np.isnan(per_class[m])
    aggregates: dict[str, dict[str, float | None]] = {}
    for m in METRICS:
        values = per_class[m]
        row: dict[str, float | None] = {}
        for a in AGGREGATES:
            members = np.ones(len(partition), bool) if a == "Total" else tags == a
            members &= ~np.isnan(values)
            row[a] = float(values[members].mean()) if members.any() else None
        aggregates[m] = row
    excluded = [names[i] for i in np.flatnonzero(undefined)]
    return MetricsTable(names, partition, per_class, aggregates, excluded)


def evaluate_scores(scores, labels, partition, class_names=None, threshold: float = 0.0) -> MetricsTable:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    per_class = {m: np.full(scores.shape[1], np.nan) for m in METRICS}
    for c in range(scores.shape[1]):
        try:
            per_class["bacc"][c] = bacc(scores[:, c], labels[:, c], threshold)
            per_class["auc"][c] = auc(scores[:, c], labels[:, c])
        except UndefinedMetric:
            pass
    return aggregate(per_class, partition, class_names)
