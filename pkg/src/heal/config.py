"""Training configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from heal.errors import ContractError

BRANCH_MODES = ("dual", "hyper-only", "line-only")


@dataclass(frozen=True)
class TrainConfig:
    embed_dim: int = 32
    hyperedges: int = 32
    batch_size: int = 64
    epochs: int = 300
    learning_rate: float = 0.01
    weight_decay: float = 0.0005
    beta: float = 0.01
    tau: float = 0.5
    bank_capacity: int = 128
    threshold: float = 0.0
    encoder_layers: int = 2
    line_layers: int = 1
    label_ratio: float = 0.5
    seed: int = 0
    branch_mode: str = "dual"
    consistency: bool = True
    encoder: str = "gcn"
    activation: str = "relu"
    degree_cap: int = 10

    def __post_init__(self):
        positive = ("embed_dim", "hyperedges", "batch_size", "epochs", "learning_rate", "tau",
                    "bank_capacity", "encoder_layers", "line_layers", "degree_cap")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ContractError(f"config key {key} must be positive, got {getattr(self, key)}")
        if self.weight_decay < 0 or self.beta < 0:
            raise ContractError("weight_decay and beta must be non-negative")
        if not 0 < self.label_ratio <= 1:
            raise ContractError(f"config key label_ratio must lie in (0, 1], got {self.label_ratio}")
        if self.branch_mode not in BRANCH_MODES:
            raise ContractError(f"config key branch_mode must be one of {BRANCH_MODES}, got {self.branch_mode!r}")
        if self.encoder not in ("gcn", "gin"):
            raise ContractError(f"config key encoder must be gcn or gin, got {self.encoder!r}")
        if self.activation not in ("relu", "tanh"):
            raise ContractError(f"config key activation must be relu or tanh, got {self.activation!r}")

    @property
    def uses_consistency(self) -> bool:
        # single-branch ablations have nothing to align
        return self.consistency and self.branch_mode == "dual"

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_dict().items())


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def coerce(key: str, raw) -> object:
    """Convert a raw string (or value) to the type of config field ``key``."""
    if key not in FIELD_TYPES:
        raise ContractError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ContractError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (``None`` values ignored)."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce(key, value)
    return TrainConfig(**values)
