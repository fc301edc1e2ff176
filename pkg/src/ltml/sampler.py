"""Class-aware resampling: pick a class, then an instance of that class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LtmlError, as_labels, make_rng


class EmptyClass(LtmlError, ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """``q`` smooths the class pick: probability proportional to ``n_c ** q``.

    ``q = 0`` is fully class-balanced, ``q = 1`` follows the raw counts.
    With ``include_all_negative_pool`` the rows without any positive label
    form one extra pseudo-class.
    """

    q: float = 0.0
    include_all_negative_pool: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")


@dataclass(frozen=True)
class ClassIndex:
    per_class: tuple[np.ndarray, ...]
    negative_pool: np.ndarray
    num_rows: int

    def groups(self, include_pool: bool) -> list[np.ndarray]:
        groups = list(self.per_class)
        if include_pool:
            groups.append(self.negative_pool)
        return groups


def build_index(labels) -> ClassIndex:
    y = as_labels(labels)
    if y.shape[0] == 0:
        raise ValueError("label matrix is empty")
    per_class = tuple(np.flatnonzero(y[:, c]) for c in range(y.shape[1]))
    pool = np.flatnonzero(y.sum(axis=1) == 0)
    return ClassIndex(per_class=per_class, negative_pool=pool, num_rows=y.shape[0])


def group_probabilities(index: ClassIndex, cfg: SamplerConfig) -> np.ndarray:
    groups = index.groups(cfg.include_all_negative_pool)
    sizes = np.array([len(g) for g in groups], dtype=np.float64)
    if cfg.q == 0.0:
        weights = np.ones_like(sizes)
    else:
        weights = sizes**cfg.q
    empty = np.flatnonzero((sizes == 0) & (weights > 0))
    if empty.size:
        # an empty all-negative pool is simply skipped
        pool_id = len(index.per_class)
        if cfg.include_all_negative_pool and empty.tolist() == [pool_id]:
            weights[pool_id] = 0.0
        else:
            raise EmptyClass(f"classes {[int(e) for e in empty if e != pool_id]} have no instances")
    return weights / weights.sum()


def sample_batch(index: ClassIndex, cfg: SamplerConfig, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``batch_size`` row indices i.i.d. with replacement."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    groups = index.groups(cfg.include_all_negative_pool)
    probs = group_probabilities(index, cfg)
    picks = rng.choice(len(groups), size=batch_size, p=probs)
    sizes = np.array([len(g) for g in groups])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    flat = np.concatenate(groups)
    within = np.floor(rng.random(batch_size) * sizes[picks]).astype(np.int64)
    return flat[offsets[picks] + within]


class ClassAwareSampler:
    """Owns an index and a seeded generator; one per training run."""

    def __init__(self, labels, cfg: SamplerConfig):
        self.cfg = cfg
        self.index = build_index(labels)
        self.rng = make_rng(cfg.seed, 0x5A4D)
        # fail early on empty classes
        group_probabilities(self.index, cfg)

    def sample(self, batch_size: int) -> np.ndarray:
        return sample_batch(self.index, self.cfg, batch_size, self.rng)
