"""Synthetic 8-class sensor corpus in the ingestion file format.

The classes are caricatures meant to be separable, not physically faithful:
each has a motion amplitude and frequency, a noise floor, a gyro amplitude
and a barometric drift (Train and Subway differ mainly in drift sign).
"""
from __future__ import annotations

from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import BLOCK_LEN, LABELS, Label, Position, SensorBlock, ShlError, Split
from .ingestion import AXES, PRESSURE, TRIAXIAL_SENSORS, format_block_lines, write_manifest

SAMPLE_RATE_HZ = 100.0
GRAVITY = np.array([0.0, 0.0, 9.81])
EARTH_FIELD_UT = np.array([22.0, 5.0, -40.0])
SEA_LEVEL_HPA = 1013.25
AXIS_WEIGHTS = np.array([1.0, 0.7, 0.4])


class InvalidSplit(ShlError, ValueError):
    pass


@dataclass(frozen=True)
class ClassSignature:
    accel_amplitude: float  # m/s^2
    frequency: float  # Hz
    noise: float  # std of per-axis Gaussian noise
    pressure_drift: float  # hPa/s
    gyro_amplitude: float  # rad/s


DEFAULT_SIGNATURES: dict[Label, ClassSignature] = {
    Label.Still: ClassSignature(0.05, 0.3, 0.02, 0.0, 0.01),
    Label.Walking: ClassSignature(2.5, 1.9, 0.15, 0.0, 0.8),
    Label.Run: ClassSignature(7.0, 2.8, 0.3, 0.0, 2.0),
    Label.Bike: ClassSignature(1.4, 1.2, 0.15, 0.0, 0.35),
    Label.Car: ClassSignature(0.7, 0.6, 0.1, 0.25, 0.12),
    Label.Bus: ClassSignature(1.0, 0.35, 0.1, -0.25, 0.2),
    Label.Train: ClassSignature(0.35, 1.0, 0.05, 0.8, 0.05),
    Label.Subway: ClassSignature(0.35, 1.0, 0.05, -0.8, 0.05),
}

# Every pair of signatures must differ by at least this relative amount in
# some parameter; see ``signature_distance``.
SIGNATURE_MARGIN = 0.25


def signature_distance(a: ClassSignature, b: ClassSignature) -> float:
    """Largest per-parameter relative difference ``|x-y| / max(|x|, |y|)``."""
    best = 0.0
    for x, y in zip(astuple(a), astuple(b)):
        scale = max(abs(x), abs(y))
        if scale > 0:
            best = max(best, abs(x - y) / scale)
    return best


def check_signatures(signatures: Mapping[Label, ClassSignature], margin: float = SIGNATURE_MARGIN) -> None:
    missing = [lab.name for lab in LABELS if lab not in signatures]
    if missing:
        raise ValueError(f"missing signatures for {', '.join(missing)}")
    for i, a in enumerate(LABELS):
        for b in LABELS[i + 1:]:
            d = signature_distance(signatures[a], signatures[b])
            if d < margin:
                raise ValueError(f"{a.name} and {b.name} signatures differ by only {d:.3f} (< {margin})")


TRAIN_POSITIONS = (Position.Hip, Position.Bag, Position.Torso)
VALIDATION_POSITIONS = (Position.Hand,)
_POSITION_INDEX = {p: i for i, p in enumerate(Position)}


def block_rng(seed: int, position: Position, label: Label, index: int) -> np.random.Generator:
    """Independent stream per block: entropy ``[seed, position, class code, block index]``."""
    return np.random.default_rng([seed, _POSITION_INDEX[position], int(label), index])


def synth_channels(sig: ClassSignature, rng: np.random.Generator,
                   block_len: int = BLOCK_LEN) -> dict[str, np.ndarray]:
    t = np.arange(block_len) / SAMPLE_RATE_HZ
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(2, 3))
    wave = 2.0 * np.pi * sig.frequency * t
    motion = sig.accel_amplitude * AXIS_WEIGHTS[:, None] * np.sin(wave[None] + phase[0][:, None])
    lacc = motion + rng.normal(0.0, sig.noise, size=(3, block_len))
    acc = lacc + GRAVITY[:, None] + rng.normal(0.0, sig.noise, size=(3, block_len))
    gyr = sig.gyro_amplitude * np.sin(wave[None] + phase[1][:, None]) + rng.normal(0.0, sig.noise, (3, block_len))
    mag = EARTH_FIELD_UT[:, None] + rng.normal(0.0, 0.2, size=(3, block_len))
    pressure = (SEA_LEVEL_HPA + rng.normal(0.0, 0.05) + sig.pressure_drift * (t - t.mean())
                + rng.normal(0.0, 0.01, size=block_len))
    out: dict[str, np.ndarray] = {}
    for name, xyz in zip(TRIAXIAL_SENSORS, (acc, gyr, mag, lacc)):
        for axis, row in zip(AXES, xyz):
            out[f"{name}_{axis}"] = row
    out[PRESSURE] = pressure
    return out


def generate_blocks(blocks_per_class: int, position: Position,
                    signatures: Mapping[Label, ClassSignature] = DEFAULT_SIGNATURES,
                    seed: int = 0) -> list[SensorBlock]:
    """``blocks_per_class`` single-label blocks for every class, class-major order."""
    if blocks_per_class < 1:
        raise ValueError("blocks_per_class must be >= 1")
    blocks = []
    for label in LABELS:
        for k in range(blocks_per_class):
            chans = synth_channels(signatures[label], block_rng(seed, position, label, k))
            blocks.append(SensorBlock(position, chans, np.full(BLOCK_LEN, int(label))))
    return blocks


def generate_mixed_label_block(class_a: Label, class_b: Label, split_point: int, seed: int = 0,
                               position: Position = Position.Hip,
                               signatures: Mapping[Label, ClassSignature] = DEFAULT_SIGNATURES) -> SensorBlock:
    """Block whose first ``split_point`` samples are ``class_a`` and the rest ``class_b``."""
    if not 0 < split_point < BLOCK_LEN:
        raise InvalidSplit(f"split_point must be in 1..{BLOCK_LEN - 1}, got {split_point}")
    rng = np.random.default_rng([seed, int(class_a), int(class_b), split_point])
    a = synth_channels(signatures[class_a], rng)
    b = synth_channels(signatures[class_b], rng)
    chans = {k: np.concatenate([a[k][:split_point], b[k][split_point:]]) for k in a}
    labels = np.concatenate([np.full(split_point, int(class_a)), np.full(BLOCK_LEN - split_point, int(class_b))])
    return SensorBlock(position, chans, labels)


def write_position(blocks: Sequence[SensorBlock], out_dir: str | Path, position: Position,
                   split: Split | None = None) -> Path:
    """Write channel files, a label file and ``manifest.txt``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(blocks[0].channels)
    files = {}
    for name in names:
        rows = np.stack([b.channels[name] for b in blocks])
        (out_dir / f"{name}.txt").write_text(format_block_lines(rows, "%.5f"), encoding="utf-8")
        files[name] = f"{name}.txt"
    labels = np.stack([b.labels for b in blocks])
    (out_dir / "labels.txt").write_text(format_block_lines(labels, "%d"), encoding="utf-8")
    manifest = out_dir / "manifest.txt"
    write_manifest(manifest, files, "labels.txt", position, BLOCK_LEN, split)
    return manifest


def generate(out_dir: str | Path, blocks_per_class: int = 100, seed: int = 0,
             signatures: Mapping[Label, ClassSignature] = DEFAULT_SIGNATURES,
             val_blocks_per_class: int | None = None) -> dict[Position, Path]:
    """Write a full corpus: hip/bag/torso as the training split, hand as validation.

    Returns the manifest path per position.
    """
    if blocks_per_class < 1:
        raise ValueError("blocks_per_class must be >= 1")
    check_signatures(signatures)
    val_n = blocks_per_class if val_blocks_per_class is None else val_blocks_per_class
    out_dir = Path(out_dir)
    manifests = {}
    for pos in TRAIN_POSITIONS + VALIDATION_POSITIONS:
        n = blocks_per_class if pos in TRAIN_POSITIONS else val_n
        split = Split.Train if pos in TRAIN_POSITIONS else Split.Validation
        blocks = generate_blocks(n, pos, signatures, seed)
        manifests[pos] = write_position(blocks, out_dir / pos.value, pos, split)
    return manifests
