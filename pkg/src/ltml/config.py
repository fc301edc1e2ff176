"""Experiment configuration: one TOML file plus ``section.key=value`` overrides.

Layout::

    seed = 0
    output_dir = "runs/default"

    [data]      # DatasetConfig fields
    [train]     # TrainConfig scalar fields
    [loss]      # LossConfig
    [llr]       # LlrConfig
    [sampler]   # SamplerConfig
    [metrics]   # threshold

The top-level ``seed`` feeds every section that does not set its own.
"""

from __future__ import annotations

import copy
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import LtmlError
from .datagen import DatasetConfig
from .llr import LlrConfig
from .losses import LossConfig
from .sampler import SamplerConfig
from .trainer import TrainConfig

SECTIONS = ("data", "train", "loss", "llr", "sampler", "metrics")


class ConfigError(LtmlError, ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    data: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    def to_dict(self) -> dict:
        t = self.train
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": self.data.to_dict(),
            "train": {f.name: getattr(t, f.name) for f in dataclasses.fields(t)
                      if f.name not in ("loss", "llr", "sampler", "threshold")},
            "loss": dataclasses.asdict(t.loss),
            "llr": dataclasses.asdict(t.llr),
            "sampler": dataclasses.asdict(t.sampler),
            "metrics": {"threshold": t.threshold},
        }


def parse_value(text: str):
    """TOML scalar/array if it parses as one, else the bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
        node[parts[-1]] = parse_value(value.strip())
    return raw


def _build(cls, section: str, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def from_dict(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - set(SECTIONS) - {"seed", "output_dir"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    for s in SECTIONS:
        if not isinstance(raw.get(s, {}), dict):
            raise ConfigError(f"[{s}] must be a table")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    def section(name, seeded=False):
        values = dict(raw.get(name, {}))
        if seeded:
            values.setdefault("seed", seed)
        return values

    train_values = section("train", seeded=True)
    for nested in ("loss", "llr", "sampler"):
        if nested in train_values:
            raise ConfigError(f"[train] must not contain {nested!r}; use the [{nested}] section")
    metrics = section("metrics")
    if set(metrics) - {"threshold"}:
        raise ConfigError(f"[metrics] unknown keys: {', '.join(sorted(set(metrics) - {'threshold'}))}")
    if "threshold" in metrics:
        train_values["threshold"] = metrics["threshold"]

    train_values["loss"] = _build(LossConfig, "loss", section("loss"))
    train_values["llr"] = _build(LlrConfig, "llr", section("llr"))
    train_values["sampler"] = _build(SamplerConfig, "sampler", section("sampler", seeded=True))
    return ExperimentConfig(
        data=_build(DatasetConfig, "data", section("data", seeded=True)),
        train=_build(TrainConfig, "train", train_values),
        output_dir=str(raw.get("output_dir", "runs/default")),
        seed=seed,
    )


def load_config(path=None, overrides=()) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(apply_overrides(raw, overrides))
