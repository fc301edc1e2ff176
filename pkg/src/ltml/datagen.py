"""Synthetic long-tailed multi-label data with one-sided label noise.

Generative model
----------------
Each sample has a latent vector ``z ~ N(0, I)`` made of one private factor
per class plus a few shared factors.  Class ``c`` reads the direction
``w_c = sqrt(1 - m) e_c + sqrt(m) e_shared(c)``; sharing a factor makes two
classes co-occur more often than independence would predict.  The label is
``y_c = 1`` iff ``w_c . z`` lands among the top ``n_c`` values, so realised
counts equal the targets ``n_c = round(head_count * decay**c)``.  Features
are a random linear mix of ``z`` plus isotropic Gaussian noise.

After a stratified train/val/test split, a fraction of the true positives in
train and val are flipped to negative.  The test split keeps clean labels.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    HEAD,
    MEDIUM,
    TAIL,
    LtmlError,
    as_labels,
    class_names,
    make_rng,
    partition_classes,
    read_matrix_csv,
    write_matrix_csv,
)

SPLITS = ("train", "val", "test")


class InfeasiblePrevalence(LtmlError, ValueError):
    pass


class TooFewPositivesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    num_samples: int = 20000
    num_classes: int = 20
    feature_dim: int = 64
    head_count: int = 5000
    # 5000 * 0.748**19 ~= 20 positives in the rarest class
    decay: float = 0.748
    shared_factors: int = 4
    mixing: float = 0.5
    feature_noise: float = 1.0
    noise_head: float = 0.02
    noise_medium: float = 0.1
    noise_tail: float = 0.1
    split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "split_ratios", tuple(float(r) for r in self.split_ratios))
        if self.num_samples <= 0:
            raise ValueError("num_samples must be > 0")
        if self.num_classes < 3:
            raise ValueError("num_classes must be >= 3")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("mixing must lie in [0, 1]")
        if self.shared_factors < 0:
            raise ValueError("shared_factors must be >= 0")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")
        for eta in (self.noise_head, self.noise_medium, self.noise_tail):
            if not 0.0 <= eta <= 0.5:
                raise ValueError("noise rates must lie in [0, 0.5]")
        if len(self.split_ratios) != 3 or min(self.split_ratios) < 0:
            raise ValueError("split_ratios must be three non-negative numbers")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split_ratios must sum to 1")

    def target_counts(self) -> np.ndarray:
        counts = np.rint(self.head_count * self.decay ** np.arange(self.num_classes)).astype(np.int64)
        bad = np.flatnonzero((counts < 5) | (counts > self.num_samples / 2))
        if bad.size:
            raise InfeasiblePrevalence(
                f"target counts {counts[bad].tolist()} for classes {bad.tolist()} "
                f"fall outside [5, N/2] with N={self.num_samples}"
            )
        return counts

    def noise_rates(self) -> np.ndarray:
        rate = {HEAD: self.noise_head, MEDIUM: self.noise_medium, TAIL: self.noise_tail}
        return np.array([rate[t] for t in partition_classes(self.target_counts())])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d


@dataclass
class SyntheticDataset:
    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    noise_mask: np.ndarray
    split: np.ndarray
    class_names: list[str] = field(default_factory=list)
    config: DatasetConfig | None = None

    def __post_init__(self):
        if not self.class_names:
            self.class_names = class_names(self.clean_labels.shape[1])

    @property
    def num_classes(self) -> int:
        return self.clean_labels.shape[1]

    def rows(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        feat_names = [f"f{j}" for j in range(self.features.shape[1])]
        write_matrix_csv(out / "features.csv", self.features, feat_names)
        write_matrix_csv(out / "labels_clean.csv", self.clean_labels, self.class_names)
        write_matrix_csv(out / "labels_noisy.csv", self.noisy_labels, self.class_names)
        write_matrix_csv(out / "noise_mask.csv", self.noise_mask.astype(np.int8), self.class_names)
        with open(out / "splits.csv", "w") as fh:
            fh.write("split\n")
            fh.writelines(f"{s}\n" for s in self.split)
        manifest = {
            "config": self.config.to_dict() if self.config else None,
            "num_samples": int(self.features.shape[0]),
            "class_names": self.class_names,
            "positives_clean": self.clean_labels.sum(axis=0).tolist(),
            "flips": self.noise_mask.sum(axis=0).tolist(),
            "split_sizes": {s: int((self.split == s).sum()) for s in SPLITS},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return out

    @classmethod
    def load(cls, directory) -> "SyntheticDataset":
        d = Path(directory)
        features, _ = read_matrix_csv(d / "features.csv")
        clean, names = read_matrix_csv(d / "labels_clean.csv", dtype=np.int8)
        noisy, _ = read_matrix_csv(d / "labels_noisy.csv", dtype=np.int8)
        mask, _ = read_matrix_csv(d / "noise_mask.csv", dtype=np.int8)
        split = np.array((d / "splits.csv").read_text().split()[1:])
        config = None
        manifest_path = d / "manifest.json"
        if manifest_path.exists():
            raw = json.loads(manifest_path.read_text()).get("config")
            if raw:
                config = DatasetConfig(**raw)
        return cls(features, clean, noisy, mask.astype(bool), split, names, config)


def class_directions(num_classes: int, shared_factors: int, mixing: float) -> np.ndarray:
    """C x L matrix of unit-norm latent read-out directions."""
    if shared_factors == 0:
        mixing = 0.0
    latent = num_classes + shared_factors
    w = np.zeros((num_classes, latent))
    w[np.arange(num_classes), np.arange(num_classes)] = np.sqrt(1.0 - mixing)
    if shared_factors:
        w[np.arange(num_classes), num_classes + np.arange(num_classes) % shared_factors] = np.sqrt(mixing)
    return w


def threshold_top_k(scores: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Label the ``counts[c]`` highest-scoring rows of each column positive."""
    labels = np.zeros(scores.shape, dtype=np.int8)
    for c, k in enumerate(counts):
        top = np.argsort(-scores[:, c], kind="stable")[:k]
        labels[top, c] = 1
    return labels


def _largest_remainder(total: int, ratios) -> np.ndarray:
    raw = total * np.asarray(ratios, dtype=np.float64)
    out = np.floor(raw).astype(np.int64)
    short = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:short]] += 1
    return out


def stratified_split(labels, ratios=(0.7, 0.1, 0.2), seed: int = 0, min_positives: int = 25) -> np.ndarray:
    """Iterative multi-label stratification.

    Classes are handled rarest first; each class's still-unassigned positives
    are dealt to the splits that are furthest below that class's quota.
    Remaining rows fill the overall split sizes.  Returns an array of split
    names.  Classes with fewer than ``min_positives`` positives trigger a
    :class:`TooFewPositivesWarning`.
    """
    y = as_labels(labels)
    ratios = np.asarray(ratios, dtype=np.float64)
    if abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n_rows, n_classes = y.shape
    rng = make_rng(seed, 0x5B17)
    n_splits = len(ratios)
    assign = np.full(n_rows, -1, dtype=np.int64)
    capacity = _largest_remainder(n_rows, ratios)
    filled = np.zeros(n_splits, dtype=np.int64)

    counts = y.sum(axis=0)
    sparse = [c for c in range(n_classes) if counts[c] < min_positives]
    if sparse:
        warnings.warn(f"classes {sparse} have fewer than {min_positives} positives; stratification is best-effort",
                      TooFewPositivesWarning, stacklevel=2)

    for c in np.argsort(counts, kind="stable"):
        pos = np.flatnonzero(y[:, c])
        quota = _largest_remainder(len(pos), ratios)
        have = np.bincount(assign[pos][assign[pos] >= 0], minlength=n_splits)
        need = quota - have
        todo = pos[assign[pos] < 0]
        todo = todo[rng.permutation(len(todo))]
        for row in todo:
            if need.max() > 0:
                s = int(np.argmax(need))
            else:
                s = int(np.argmax(capacity - filled))
            assign[row] = s
            need[s] -= 1
            filled[s] += 1

    rest = np.flatnonzero(assign < 0)
    rest = rest[rng.permutation(len(rest))]
    room = np.maximum(capacity - filled, 0)
    # over-filled splits leave more rows than room; hand them out by ratio
    extra = len(rest) - room.sum()
    if extra > 0:
        room += _largest_remainder(int(extra), ratios)
    start = 0
    for s in range(n_splits):
        take = rest[start:start + room[s]]
        assign[take] = s
        start += room[s]
    return np.array(SPLITS[:n_splits] if n_splits == 3 else [str(i) for i in range(n_splits)])[assign]


def inject_noise(clean, split, rates, rng: np.random.Generator, noisy_splits=("train", "val")) -> np.ndarray:
    """Boolean mask of positive entries flipped to negative (only in ``noisy_splits``)."""
    y = as_labels(clean)
    eligible = (y == 1) & np.isin(split, noisy_splits)[:, None]
    draws = rng.random(y.shape)
    return eligible & (draws < np.asarray(rates)[None, :])


def generate(cfg: DatasetConfig) -> SyntheticDataset:
    counts = cfg.target_counts()
    n, c, d = cfg.num_samples, cfg.num_classes, cfg.feature_dim
    w = class_directions(c, cfg.shared_factors, cfg.mixing)
    latent = w.shape[1]

    z = make_rng(cfg.seed, 1).standard_normal((n, latent))
    mixing_matrix = make_rng(cfg.seed, 2).standard_normal((latent, d)) / np.sqrt(latent)
    eps = make_rng(cfg.seed, 3).standard_normal((n, d))
    features = z @ mixing_matrix + cfg.feature_noise * eps

    clean = threshold_top_k(z @ w.T, counts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooFewPositivesWarning)
        split = stratified_split(clean, cfg.split_ratios, seed=cfg.seed)
    mask = inject_noise(clean, split, cfg.noise_rates(), make_rng(cfg.seed, 4))
    noisy = (clean & ~mask).astype(np.int8)
    return SyntheticDataset(features, clean, noisy, mask, split, class_names(c), cfg)
