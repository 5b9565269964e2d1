"""Run configuration shared by all CLI commands."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data_model import ShlError
from .keyvalue import format_key_values, read_key_values
from .nn.model import Architecture, CellActivation
from .preprocessing import Balance, PipelineConfig
from .training import TrainConfig

MAX_SEED = 2**64 - 1


class ConfigError(ShlError):
    pass


def check_seed(seed: int) -> int:
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass
class RunConfig:
    seed: int = 0
    # pipeline
    timesteps: int = 5
    feature_dim: int = 100
    balance: Balance = Balance.UNDERSAMPLE
    duplicate_factor: int = 2
    # model
    hidden1: int = 64
    hidden2: int = 64
    dropout_p: float = 0.25
    cell_activation: CellActivation = CellActivation.Sigmoid
    # optimisation
    epochs: int = 197
    batch_size: int = 64
    lr: float = 1e-3
    # synthetic corpus
    blocks_per_class: int = 100
    # paths
    manifests: list[str] = field(default_factory=list)
    train_dataset: str = ""
    val_dataset: str = ""

    def __post_init__(self):
        check_seed(self.seed)

    @classmethod
    def from_dict(cls, raw: dict[str, str]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, text in raw.items():
            try:
                kwargs[key] = _convert(key, text)
            except (ValueError, ShlError) as exc:
                raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(read_key_values(path))

    def to_dict(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Balance):
                v = v.value
            elif isinstance(v, CellActivation):
                v = v.name.lower()
            elif isinstance(v, list):
                v = ",".join(v)
            elif isinstance(v, float):
                v = repr(v)
            out[f.name] = str(v)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(format_key_values(self.to_dict()), encoding="utf-8")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.timesteps, self.feature_dim, self.balance, self.seed,
                              duplicate_factor=self.duplicate_factor)

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.feature_dim, (self.hidden1, self.hidden2), dropout_p=self.dropout_p,
                            cell_activation=self.cell_activation)

    @property
    def training(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.seed)


def _convert(key: str, text: str):
    if key == "balance":
        return Balance(text.strip().lower())
    if key == "cell_activation":
        return CellActivation.parse(text)
    if key == "manifests":
        return [p.strip() for p in text.split(",") if p.strip()]
    if key in ("train_dataset", "val_dataset"):
        return text
    if key in ("dropout_p", "lr"):
        return float(text)
    return int(text)
