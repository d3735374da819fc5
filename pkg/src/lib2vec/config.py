"""Run configuration: one JSON object, validated before any stage runs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .liberty import DEFAULT_TYPE_RULES


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    libs: list = field(default_factory=list)
    out: str = "run"
    d: int = 32
    hidden: int = 64
    grid: list = field(default_factory=lambda: [16, 16])
    seed: int = 0
    epochs_functional: int = 200
    epochs_electrical: int = 200
    lr: float = 1e-3
    batch: int = 256
    weight_decay: float = 0.0
    cosine: bool = False
    restarts: int = 1
    pair_cap: Optional[int] = 20000
    partners: int = 4
    electrical_cap: Optional[int] = 1000
    ks: list = field(default_factory=lambda: [1, 3, 10])
    type_rules: list = field(default_factory=lambda: list(DEFAULT_TYPE_RULES))
    train_electrical: bool = True
    sidecar: bool = False

    def validate(self) -> "RunConfig":
        if self.d < 1 or self.hidden < 1:
            raise ConfigError("d and hidden must be positive")
        if len(self.grid) != 2 or min(self.grid) < 2:
            raise ConfigError("grid must be [S, L] with S, L >= 2")
        if self.epochs_functional < 0 or self.epochs_electrical < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.lr <= 0 or self.batch < 1:
            raise ConfigError("lr must be > 0 and batch >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not self.ks or min(self.ks) < 1:
            raise ConfigError("ks must be a nonempty list of positive integers")
        if self.partners < 0:
            raise ConfigError("partners must be >= 0")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def out_dir(self) -> Path:
        return Path(self.out)
