"""Run configuration: defaults, ``key=value`` files and layered overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .audio import CANONICAL_RATE
from .dsp import SpectrogramConfig
from .errors import InvalidConfig

CACHE_ENV = "DEEPEMO_CACHE_DIR"


@dataclass
class RunConfig:
    dataset_root: str | None = None
    cache_dir: str = ".deepemo_cache"
    output_dir: str = "runs"
    sample_rate: int = CANONICAL_RATE
    n_fft: int = 1024
    hop: int = 256
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None
    floor_db: float = -80.0
    arch: str = "resnet18"
    num_classes: int = 8
    pretrained_checkpoint: str | None = None
    freeze_backbone: bool = False
    imagenet_norm: bool = False
    epochs: int = 50
    batch_size: int = 16
    lr: float = 3e-5
    seed: int = 0
    train_fraction: float = 0.8
    actor_disjoint: bool = False
    deterministic: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be > 0, got {self.lr}")
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.train_fraction <= 1:
            raise InvalidConfig(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        if self.num_classes < 2:
            raise InvalidConfig(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def spectrogram(self) -> SpectrogramConfig:
        return SpectrogramConfig(self.n_fft, self.hop, self.n_mels, self.fmin, self.fmax, self.floor_db)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT = {"sample_rate", "n_fft", "hop", "n_mels", "num_classes", "epochs", "batch_size", "seed", "workers"}
_FLOAT = {"fmin", "floor_db", "lr", "train_fraction"}
_BOOL = {"freeze_backbone", "imagenet_norm", "actor_disjoint", "deterministic"}
_OPTIONAL_FLOAT = {"fmax"}


def defaults() -> dict:
    values = {name: f.default for name, f in _FIELDS.items()}
    if os.environ.get(CACHE_ENV):
        values["cache_dir"] = os.environ[CACHE_ENV]
    return values


def coerce(key: str, raw):
    """Convert a textual value to the field's type."""
    if key not in _FIELDS:
        raise InvalidConfig(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if key in _INT:
            return int(text)
        if key in _FLOAT:
            return float(text)
        if key in _OPTIONAL_FLOAT:
            return None if text.lower() in ("", "none") else float(text)
        if key in _BOOL:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError as exc:
        raise InvalidConfig(f"bad value {raw!r} for {key}") from exc
    if text.lower() == "none" and _FIELDS[key].default is None:
        return None
    return text


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = coerce(key, value)
    return values


def load_config_file(path: str | Path) -> dict:
    return parse_config_text(Path(path).read_text())


def resolve(*layers: dict) -> RunConfig:
    """Merge layers left to right (later wins), skipping ``None`` entries."""
    values = defaults()
    for layer in layers:
        for key, value in layer.items():
            if value is not None and key in _FIELDS:
                values[key] = coerce(key, value)
    return RunConfig(**values)
