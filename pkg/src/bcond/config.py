"""Pipeline configuration: key=value files, overrides and provenance hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields

from .classifier import TrainConfig
from .imaging import DEFAULT_SCALES, DEFAULT_STRIDE_FRACTION, MAX_SIDE
from .selection import DEFAULT_RELEVANCE_CLASSES, SelectionConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    scales: tuple[int, ...] = DEFAULT_SCALES
    stride_fraction: float = DEFAULT_STRIDE_FRACTION
    k: int = 50
    t: float = 0.21
    max_side: int = MAX_SIDE
    ambiguity_threshold: float = 0.25
    method: str = "MV"
    epochs: int = 30
    learning_rate: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    lr_decay: float = 0.0
    augment_factor: int = 1
    feature_mode: str = "descriptor"
    split_ratios: tuple[float, ...] = (0.6, 0.15, 0.25)
    reference_year: int = 2020
    relevance_classes: tuple[str, ...] = DEFAULT_RELEVANCE_CLASSES
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("MV", "LH"):
            raise ConfigError(f"method must be MV or LH, got {self.method!r}")
        if self.feature_mode not in ("descriptor", "pixels"):
            raise ConfigError(f"feature_mode must be descriptor or pixels, got {self.feature_mode!r}")
        if not 0 < self.t <= 1 or self.k < 1:
            raise ConfigError("need k >= 1 and 0 < t <= 1")
        if not 0 <= self.ambiguity_threshold <= 1:
            raise ConfigError("ambiguity_threshold must be in [0, 1]")
        if len(self.split_ratios) != 3:
            raise ConfigError("split_ratios needs three values")
        if self.augment_factor < 1:
            raise ConfigError("augment_factor must be >= 1")

    @property
    def selection(self) -> SelectionConfig:
        return SelectionConfig(self.scales, self.stride_fraction, self.k, self.t, self.seed, self.max_side)

    @property
    def train(self) -> TrainConfig:
        try:
            return TrainConfig(self.epochs, self.learning_rate, self.momentum, self.weight_decay,
                               self.batch_size, self.seed, self.lr_decay)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={','.join(map(str, v)) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config": self.as_dict(), "config_hash": self.hash, "seed": self.seed}

    def preamble(self) -> list[str]:
        """Comment lines embedding the exact config in text artifacts."""
        return [f"config_hash={self.hash} seed={self.seed}",
                "config " + "; ".join(self.to_text().strip().splitlines())]


def _convert(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(PipelineConfig)}.get(name)
    if ftype is None:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    try:
        if ftype.startswith("tuple[int"):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if ftype.startswith("tuple[float"):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if ftype.startswith("tuple[str"):
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_assignments(lines, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        values[key.strip()] = _convert(key.strip(), raw)
    return values


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the file's values, then ``overrides`` (already typed)."""
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_assignments(fh, os.fspath(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig(**values)
