"""Model/training configuration and its canonical text format.

Config files are flat ``key = value`` lines with ``#`` comments and dotted
keys (``model.patch_size = 4``). Parsing is strict: unknown keys are hard
errors, so a typo can never silently fall back to a default. Serialization
is canonical (fixed key order, normalized value rendering), which makes the
blob embedded in checkpoints byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

APE_MODES = ("none", "pe", "cpe", "ape")
HIERARCHY_MODES = ("variable", "fixed")


@dataclass
class HipaConfig:
    # model
    scale: int = 2
    channels: int = 8
    mrfam_per_stage: tuple = (1, 1, 2)
    residual_blocks: int = 1
    patch_size: int = 2
    heads: int = 2
    layers: int = 1
    ape_mode: str = "ape"
    hierarchy_mode: str = "variable"
    branches: tuple = (1, 2, 3)
    loss_weights: tuple = (1.0, 1.0, 1.0)
    # training
    seed: int = 0
    lr: float = 1e-4
    batch_size: int = 4
    lr_crop: int = 16
    checkpoint_every: int = 100

    def validate(self) -> "HipaConfig":
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"model.scale must be 2, 3 or 4, got {self.scale}")
        if self.channels < 1:
            raise ConfigError(f"model.channels must be >= 1, got {self.channels}")
        if len(self.mrfam_per_stage) != 3 or any(g < 1 for g in self.mrfam_per_stage):
            raise ConfigError(
                f"model.mrfam_per_stage needs three counts >= 1, got {self.mrfam_per_stage}"
            )
        if self.residual_blocks < 1:
            raise ConfigError(f"model.residual_blocks must be >= 1, got {self.residual_blocks}")
        if self.patch_size < 1:
            raise ConfigError(f"model.patch_size must be >= 1, got {self.patch_size}")
        token_dim = self.patch_size * self.patch_size * self.channels
        if self.heads < 1 or token_dim % self.heads:
            raise ConfigError(
                f"model.heads ({self.heads}) must divide the token dim "
                f"P^2*C = {token_dim}"
            )
        if self.layers < 0:
            raise ConfigError(f"model.layers must be >= 0, got {self.layers}")
        if self.ape_mode not in APE_MODES:
            raise ConfigError(f"model.ape_mode must be one of {APE_MODES}, got {self.ape_mode!r}")
        if self.hierarchy_mode not in HIERARCHY_MODES:
            raise ConfigError(
                f"model.hierarchy_mode must be one of {HIERARCHY_MODES}, got {self.hierarchy_mode!r}"
            )
        if (not self.branches or sorted(set(self.branches)) != sorted(self.branches)
                or any(b not in (1, 2, 3) for b in self.branches)):
            raise ConfigError(
                f"model.branches must be a nonempty subset of 1,2,3, got {self.branches}"
            )
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ConfigError(
                f"model.loss_weights needs three nonnegative values, got {self.loss_weights}"
            )
        if self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.lr_crop < 1 or self.lr_crop % (2 * self.patch_size):
            raise ConfigError(
                f"train.lr_crop ({self.lr_crop}) must be divisible by "
                f"2*patch_size = {2 * self.patch_size}"
            )
        if self.checkpoint_every < 1:
            raise ConfigError(
                f"train.checkpoint_every must be >= 1, got {self.checkpoint_every}"
            )
        return self


_INT_TUPLE_KEYS = {"model.mrfam_per_stage", "model.branches"}
_FLOAT_TUPLE_KEYS = {"model.loss_weights"}

_KEY_TO_FIELD = {
    "model.scale": "scale",
    "model.channels": "channels",
    "model.mrfam_per_stage": "mrfam_per_stage",
    "model.residual_blocks": "residual_blocks",
    "model.patch_size": "patch_size",
    "model.heads": "heads",
    "model.layers": "layers",
    "model.ape_mode": "ape_mode",
    "model.hierarchy_mode": "hierarchy_mode",
    "model.branches": "branches",
    "model.loss_weights": "loss_weights",
    "train.seed": "seed",
    "train.lr": "lr",
    "train.batch_size": "batch_size",
    "train.lr_crop": "lr_crop",
    "train.checkpoint_every": "checkpoint_every",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}

_INT_FIELDS = {"scale", "channels", "residual_blocks", "patch_size", "heads",
               "layers", "seed", "batch_size", "lr_crop", "checkpoint_every"}
_FLOAT_FIELDS = {"lr"}


def _parse_value(key: str, raw: str):
    field = _KEY_TO_FIELD[key]
    try:
        if key in _INT_TUPLE_KEYS:
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
        if key in _FLOAT_TUPLE_KEYS:
            return tuple(float(p.strip()) for p in raw.split(",") if p.strip())
        if field in _INT_FIELDS:
            return int(raw)
        if field in _FLOAT_FIELDS:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r}")


def parse_config_text(text: str) -> HipaConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if _KEY_TO_FIELD[key] in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[_KEY_TO_FIELD[key]] = _parse_value(key, raw)
    return HipaConfig(**values).validate()


def load_config(path) -> HipaConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def _render_value(field: str, value) -> str:
    if isinstance(value, tuple):
        if field == "loss_weights":
            return ",".join(repr(float(v)) for v in value)
        return ",".join(str(int(v)) for v in value)
    if field in _FLOAT_FIELDS:
        return repr(float(value))
    return str(value)


def config_to_text(config: HipaConfig) -> str:
    """Canonical rendering: field order of the dataclass, one key per line."""
    lines = []
    for f in fields(HipaConfig):
        key = _FIELD_TO_KEY[f.name]
        lines.append(f"{key} = {_render_value(f.name, getattr(config, f.name))}")
    return "\n".join(lines) + "\n"
