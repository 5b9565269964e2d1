"""Block-to-sample pipeline: majority labeling, activation feature, windowing,
min-max normalization and class balancing.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import (
    BLOCK_LEN, N_CLASSES, POSITION_CODES, Dataset, Label, SensorBlock, ShapeMismatch, ShlError,
    Split, WindowSample,
)
from .ingestion import AXES, PRESSURE, TRIAXIAL_SENSORS


class MissingChannel(ShlError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "missing channel"


class LengthMismatch(ShlError, ValueError):
    pass


class EmptyDataset(ShlError, ValueError):
    pass


class MissingClass(ShlError, ValueError):
    pass


class Balance(str, enum.Enum):
    NONE = "none"
    UNDERSAMPLE = "undersample"
    UNDERSAMPLE_DUPLICATE = "undersample_duplicate"


@dataclass(frozen=True)
class PipelineConfig:
    timesteps: int = 5
    feature_dim: int = 100
    balance: Balance = Balance.UNDERSAMPLE
    seed: int = 0
    duplicate_class: Label = Label.Run
    duplicate_factor: int = 2


def majority_label(labels: Sequence[int] | np.ndarray) -> Label | None:
    """Majority vote over per-sample codes; ``None`` means drop the block.

    Code 0 does not vote for a class. The block is dropped when code 0 is
    strictly more frequent than every class code, or when no class code
    appears. Ties between classes go to the lowest code.
    """
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=N_CLASSES + 1)
    if counts.size > N_CLASSES + 1 or np.any(np.asarray(labels) < 0):
        raise ValueError("label codes must be in 0..8")
    best = int(np.argmax(counts[1:]))  # argmax returns the first maximum
    if counts[best + 1] == 0 or counts[0] > counts[best + 1]:
        return None
    return Label(best + 1)


def activation_signal(block: SensorBlock) -> np.ndarray:
    """Per-sample sum of the acc/gyr/mag/lacc vector norms plus pressure."""
    ch = block.channels
    total = np.zeros(block.block_len)
    for sensor in TRIAXIAL_SENSORS:
        try:
            xyz = np.stack([ch[f"{sensor}_{a}"] for a in AXES])
        except KeyError as exc:
            raise MissingChannel(f"block is missing channel {exc.args[0]!r}") from None
        total += np.sqrt(np.sum(xyz * xyz, axis=0))
    if PRESSURE not in ch:
        raise MissingChannel(f"block is missing channel {PRESSURE!r}")
    return total + ch[PRESSURE]


def window_reshape(signal: np.ndarray, timesteps: int = 5, feature_dim: int = 100) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (timesteps * feature_dim,):
        raise LengthMismatch(f"signal of shape {signal.shape} cannot form a {timesteps}x{feature_dim} window")
    return signal.reshape(timesteps, feature_dim)


@dataclass(frozen=True)
class Normalizer:
    """Per-feature min/max scaler onto [-1, 1]."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeMismatch("min and max must be vectors of equal length")
        if np.any(lo > hi):
            raise ShlError("normalizer min exceeds max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def feature_dim(self) -> int:
        return self.min.size

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            " ".join(repr(float(v)) for v in self.min) + "\n"
            + " ".join(repr(float(v)) for v in self.max) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Normalizer":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) != 2:
            raise ShlError(f"{path}: normalizer file must have exactly two lines")
        lo, hi = (np.array([float(t) for t in ln.split()]) for ln in lines)
        return cls(lo, hi)


def _stack(train) -> np.ndarray:
    if isinstance(train, Dataset):
        return train.X
    if isinstance(train, np.ndarray):
        return train if train.ndim == 3 else train[None]
    return np.stack([s.features if isinstance(s, WindowSample) else np.asarray(s) for s in train])


def fit_normalizer(train) -> Normalizer:
    """Fit column-wise min/max over all samples and timesteps of the training data."""
    if len(train) == 0:
        raise EmptyDataset("cannot fit a normalizer on an empty training set")
    X = _stack(train)
    flat = X.reshape(-1, X.shape[-1])
    return Normalizer(flat.min(axis=0), flat.max(axis=0))


def apply_normalizer(n: Normalizer, x: np.ndarray) -> np.ndarray:
    """Affine map of each column onto [-1, 1] for the fitted range, without clamping.

    Degenerate columns (min == max) map to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != n.feature_dim:
        raise ShapeMismatch(f"expected {n.feature_dim} feature columns, got {x.shape[-1]}")
    span = n.max - n.min
    degenerate = span == 0
    # divide by span (rather than multiply by 2/span) so the fitted extremes land exactly on +-1
    safe = np.where(degenerate, 1.0, span)
    return np.where(degenerate, 0.0, 2.0 * ((x - n.min) / safe) - 1.0)


def _require_all_classes(ds: Dataset) -> np.ndarray:
    counts = ds.class_counts()
    missing = [Label(i + 1).name for i in np.flatnonzero(counts == 0)]
    if missing:
        raise MissingClass(f"classes without samples: {', '.join(missing)}")
    return counts


def balance_undersample(ds: Dataset, seed: int) -> Dataset:
    """Draw every class down to the smallest class count.

    Selection is uniform without replacement; surviving samples keep their
    original relative order.
    """
    counts = _require_all_classes(ds)
    target = int(counts.min())
    rng = np.random.default_rng(seed)
    keep = []
    for code in range(1, N_CLASSES + 1):
        idx = np.flatnonzero(ds.y == code)
        keep.append(rng.choice(idx, size=target, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)))


def duplicate_class(ds: Dataset, target_class: Label, factor: int) -> Dataset:
    """Repeat every sample of ``target_class`` ``factor`` times in place."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if not np.any(ds.y == int(target_class)):
        raise MissingClass(f"no samples of class {Label(target_class).name}")
    reps = np.where(ds.y == int(target_class), factor, 1)
    return ds.subset(np.repeat(np.arange(len(ds)), reps))


def balance_duplicate_minority(ds: Dataset, target_class: Label, factor: int, seed: int) -> Dataset:
    """Duplicate one class, then under-sample. Not the default balancing mode."""
    return balance_undersample(duplicate_class(ds, target_class, factor), seed)


def blocks_to_dataset(blocks: Sequence[SensorBlock], timesteps: int = 5, feature_dim: int = 100,
                      split: Split = Split.Train) -> Dataset:
    """Label, featurize and window blocks; blocks losing the majority vote are dropped."""
    X, y, pos = [], [], []
    for block in blocks:
        label = majority_label(block.labels)
        if label is None:
            continue
        X.append(window_reshape(activation_signal(block), timesteps, feature_dim))
        y.append(int(label))
        pos.append(POSITION_CODES[block.position])
    if not X:
        return Dataset(np.zeros((0, timesteps, feature_dim)), np.zeros(0, np.uint8), split,
                       timesteps=timesteps, feature_dim=feature_dim)
    return Dataset(np.stack(X), np.array(y, np.uint8), split, np.array(pos, np.int8))


def balance(ds: Dataset, cfg: PipelineConfig) -> Dataset:
    if cfg.balance is Balance.NONE or len(ds) == 0:
        return ds
    if cfg.balance is Balance.UNDERSAMPLE:
        return balance_undersample(ds, cfg.seed)
    return balance_duplicate_minority(ds, cfg.duplicate_class, cfg.duplicate_factor, cfg.seed)


def run_pipeline(raw: Sequence[SensorBlock], cfg: PipelineConfig = PipelineConfig(),
                 normalizer: Normalizer | None = None,
                 split: Split = Split.Train) -> tuple[Dataset, Normalizer]:
    """Blocks in, normalized dataset out.

    Drops blocks without a usable majority label, computes the activation
    feature, reshapes to (timesteps, feature_dim), balances per ``cfg`` and
    normalizes. With no ``normalizer`` one is fitted on the (balanced) data;
    pass the training normalizer for validation/test splits.
    """
    if raw and cfg.timesteps * cfg.feature_dim != raw[0].block_len:
        raise LengthMismatch(
            f"timesteps*feature_dim = {cfg.timesteps * cfg.feature_dim} but blocks hold {raw[0].block_len} samples"
        )
    ds = balance(blocks_to_dataset(raw, cfg.timesteps, cfg.feature_dim, split), cfg)
    if normalizer is None:
        normalizer = fit_normalizer(ds)
    if len(ds):
        ds = Dataset(apply_normalizer(normalizer, ds.X), ds.y, split, ds.positions)
    return ds, normalizer


# processed-dataset file ------------------------------------------------------

DATASET_MAGIC = b"MNDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write the binary sample file: header, then per sample a u8 label and f64 LE features."""
    n, t, d = ds.X.shape
    rec = np.dtype([("label", "u1"), ("x", "<f8", (t * d,))])
    body = np.empty(n, dtype=rec)
    body["label"] = ds.y
    body["x"] = ds.X.reshape(n, t * d)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n, t, d))
        fh.write(body.tobytes())


def load_dataset(path: str | Path, split: Split = Split.Train) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ShlError(f"{path}: truncated dataset header")
    magic, version, n, t, d = _HEADER.unpack_from(data)
    if magic != DATASET_MAGIC:
        raise ShlError(f"{path}: not a dataset file (magic {magic!r})")
    if version != DATASET_VERSION:
        raise ShlError(f"{path}: unsupported dataset version {version}")
    rec = np.dtype([("label", "u1"), ("x", "<f8", (t * d,))])
    if len(data) - _HEADER.size != n * rec.itemsize:
        raise ShlError(f"{path}: payload size does not match header")
    body = np.frombuffer(data, dtype=rec, count=n, offset=_HEADER.size)
    X = body["x"].astype(np.float64).reshape(n, t, d)
    return Dataset(X, body["label"].copy(), split, timesteps=t, feature_dim=d)
