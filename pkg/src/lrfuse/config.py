"""Run configuration: hyperparameters, architecture dims, dataset source.

Configs live in flat key = value text files; command-line --set overrides
win over file values. Field names in the file match the dataclass exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .imaging import COLOR_STEP


@dataclass
class TrainConfig:
    hr_size: int = 128
    lr_size: int = 8
    base_channels: int = 64
    max_channels: int = 512
    num_scales: int = 4
    batch_size: int = 8
    lr_g: float = 1e-3
    lr_d: float = 4e-3
    beta1: float = 0.0
    beta2: float = 0.99
    lambda_cyc: float = 1.0
    r1_gamma: float = 0.5
    r: float = COLOR_STEP
    epsilon: float = 0.0
    p: float = 1.0
    generator_adv: bool = True
    max_steps: int = 20000
    seed: int = 0
    checkpoint_interval: int = 1000
    sample_interval: int = 500
    log_interval: int = 50
    data_dir: str = ""
    domain: str = ""
    synthetic_size: int = 0  # > 0 renders a procedural dataset instead
    device: str = "cpu"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.lr_d < self.lr_g:
            raise ValueError(f"lr_d ({self.lr_d}) must be >= lr_g ({self.lr_g})")
        if self.lambda_cyc < 0:
            raise ValueError(f"lambda_cyc must be >= 0, got {self.lambda_cyc}")
        if self.r <= 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.hr_size & (self.hr_size - 1) or self.hr_size < 8:
            raise ValueError(f"hr_size must be a power of two >= 8, got {self.hr_size}")
        if self.hr_size % self.lr_size or self.lr_size >= self.hr_size:
            raise ValueError(
                f"lr_size ({self.lr_size}) must properly divide hr_size ({self.hr_size})"
            )
        if not self.data_dir and self.synthetic_size == 0:
            raise ValueError("either data_dir or synthetic_size must be set")

    @property
    def downscale_factor(self) -> int:
        return self.hr_size // self.lr_size

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def replace(self, **overrides) -> "TrainConfig":
        merged = {**asdict(self), **overrides}
        return TrainConfig(**merged)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELD_TYPES.get(name)
    if kind is None:
        raise ValueError(f"unknown config field: {name}")
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "on", "yes"):
            return True
        if raw.lower() in ("false", "0", "off", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_overrides(pairs: list[str]) -> dict:
    """Parse --set key=value pairs, validating names against TrainConfig."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override must look like key=value, got {pair!r}")
        name, raw = pair.split("=", 1)
        out[name.strip()] = _parse_value(name.strip(), raw)
    return out


def load_config(path, overrides: dict | None = None) -> TrainConfig:
    """Read a flat key = value config file and apply overrides on top."""
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        name, raw = line.split("=", 1)
        name = name.strip()
        values[name] = _parse_value(name, raw)
    if overrides:
        values.update(overrides)
    return TrainConfig(**values)


def save_config(config: TrainConfig, path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(config)]
    Path(path).write_text("\n".join(lines) + "\n")
