"""Domain types shared by every stage: labels, sensor blocks, windowed datasets."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

BLOCK_LEN = 500
N_CLASSES = 8


class ShlError(Exception):
    """Base class for all errors raised by this package."""


class OutOfRange(ShlError, ValueError):
    pass


class ShapeMismatch(ShlError, ValueError):
    pass


class Label(enum.IntEnum):
    Still = 1
    Walking = 2
    Run = 3
    Bike = 4
    Car = 5
    Bus = 6
    Train = 7
    Subway = 8

    @property
    def code(self) -> int:
        return int(self)

    @property
    def index(self) -> int:
        """Zero-based output-neuron index."""
        return int(self) - 1


LABELS: tuple[Label, ...] = tuple(Label)


def label_from_code(code: int) -> Label:
    """Map an on-disk label code (1..8) to a :class:`Label`.

    Code 0 marks unlabeled raw data and must be filtered before this point.
    """
    try:
        ival = int(code)
    except (TypeError, ValueError):
        raise OutOfRange(f"label code {code!r} is not an integer") from None
    if ival != code or not 1 <= ival <= N_CLASSES:
        raise OutOfRange(f"label code {code!r} outside 1..{N_CLASSES}")
    return Label(ival)


class Position(str, enum.Enum):
    Hip = "hip"
    Bag = "bag"
    Torso = "torso"
    Hand = "hand"

    @classmethod
    def parse(cls, text: str) -> "Position":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ShlError(f"unknown position {text!r}") from None


POSITION_CODES = {p: i for i, p in enumerate(Position)}


class Split(str, enum.Enum):
    Train = "train"
    Validation = "validation"
    Test = "test"

    @classmethod
    def parse(cls, text: str) -> "Split":
        key = text.strip().lower()
        if key == "val":
            key = "validation"
        try:
            return cls(key)
        except ValueError:
            raise ShlError(f"unknown split {text!r}") from None


@dataclass(frozen=True)
class SensorBlock:
    """One 5 s block: per-channel readings plus per-sample label codes."""

    position: Position
    channels: Mapping[str, np.ndarray]
    labels: np.ndarray
    block_len: int = BLOCK_LEN

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.block_len,):
            raise ShapeMismatch(f"labels must have {self.block_len} entries, got {labels.shape}")
        chans = {}
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != (self.block_len,):
                raise ShapeMismatch(f"channel {name!r} must have {self.block_len} entries, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ShlError(f"channel {name!r} contains non-finite values")
            chans[name] = arr
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "channels", chans)


@dataclass(frozen=True)
class WindowSample:
    features: np.ndarray
    label: Label
    source_position: Position | None = None


@dataclass
class Dataset:
    """Windowed samples stored as stacked arrays.

    ``X`` has shape (n, timesteps, feature_dim), ``y`` holds label codes 1..8
    and ``positions`` holds :data:`POSITION_CODES` values (-1 when unknown).
    """

    X: np.ndarray
    y: np.ndarray
    split: Split = Split.Train
    positions: np.ndarray | None = None
    timesteps: int = field(default=-1)
    feature_dim: int = field(default=-1)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.uint8)
        if X.ndim != 3:
            if X.size == 0 and self.timesteps > 0 and self.feature_dim > 0:
                X = X.reshape(0, self.timesteps, self.feature_dim)
            else:
                raise ShapeMismatch(f"X must be 3-D (n, timesteps, feature_dim), got {X.shape}")
        n, t, d = X.shape
        if self.timesteps not in (-1, t) or self.feature_dim not in (-1, d):
            raise ShapeMismatch(
                f"declared shape ({self.timesteps}, {self.feature_dim}) disagrees with samples ({t}, {d})"
            )
        if y.shape != (n,):
            raise ShapeMismatch(f"y must have shape ({n},), got {y.shape}")
        if n and (y.min() < 1 or y.max() > N_CLASSES):
            raise OutOfRange("dataset labels must be codes 1..8")
        if not np.all(np.isfinite(X)):
            raise ShlError("dataset features contain non-finite values")
        pos = np.full(n, -1, dtype=np.int8) if self.positions is None else np.asarray(self.positions, np.int8)
        if pos.shape != (n,):
            raise ShapeMismatch("positions must align with samples")
        self.X, self.y, self.positions = X, y, pos
        self.timesteps, self.feature_dim = t, d

    @classmethod
    def from_samples(cls, samples: Sequence[WindowSample], split: Split = Split.Train,
                     timesteps: int = -1, feature_dim: int = -1) -> "Dataset":
        if not samples:
            return cls(np.zeros((0, max(timesteps, 0), max(feature_dim, 0))), np.zeros(0, np.uint8),
                       split, timesteps=timesteps, feature_dim=feature_dim)
        shapes = {s.features.shape for s in samples}
        if len(shapes) != 1:
            raise ShapeMismatch(f"samples have differing shapes: {sorted(shapes)}")
        X = np.stack([s.features for s in samples])
        y = np.array([label_from_code(s.label) for s in samples], dtype=np.uint8)
        pos = np.array([-1 if s.source_position is None else POSITION_CODES[s.source_position]
                        for s in samples], dtype=np.int8)
        return cls(X, y, split, pos, timesteps, feature_dim)

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> WindowSample:
        p = int(self.positions[i])
        return WindowSample(self.X[i], Label(int(self.y[i])), None if p < 0 else list(Position)[p])

    def __iter__(self) -> Iterator[WindowSample]:
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[WindowSample]:
        return list(self)

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.split, self.positions[idx],
                       self.timesteps, self.feature_dim)

    def class_counts(self) -> np.ndarray:
        """Counts per class, index 0 = Still."""
        return np.bincount(self.y, minlength=N_CLASSES + 1)[1:]


def one_hot(codes: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.intp)
    out = np.zeros((codes.size, n_classes))
    out[np.arange(codes.size), codes - 1] = 1.0
    return out
