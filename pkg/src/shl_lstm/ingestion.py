"""Parsing of challenge-style channel/label text files into sensor blocks.

Each channel lives in its own text file with one block per line. A manifest
(``key = value`` text) maps channel ids to file paths relative to the
manifest, and also carries ``labels``, ``position``, ``block_len`` and an
optional ``split``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data_model import BLOCK_LEN, N_CLASSES, Position, SensorBlock, ShlError, Split
from .keyvalue import format_key_values, read_key_values

AXES = ("x", "y", "z")
TRIAXIAL_SENSORS = ("acc", "gyr", "mag", "lacc")
PRESSURE = "pressure"
FEATURE_CHANNELS = tuple(f"{s}_{a}" for s in TRIAXIAL_SENSORS for a in AXES) + (PRESSURE,)
# gravity and orientation are delivered by the challenge but never used
IGNORED_PREFIXES = ("gra_", "ori_")

_RESERVED_KEYS = {"labels", "position", "block_len", "split"}


class MalformedLine(ShlError, ValueError):
    def __init__(self, lineno: int, reason: str, source: str = "<string>"):
        super().__init__(f"{source}:{lineno}: {reason}")
        self.lineno = lineno
        self.source = source


class InvalidLabelCode(MalformedLine):
    pass


class BlockCountMismatch(ShlError, ValueError):
    pass


class EmptyInput(ShlError, ValueError):
    pass


@dataclass(frozen=True)
class RawPositionData:
    position: Position
    blocks: tuple[SensorBlock, ...]

    def __post_init__(self):
        if self.blocks:
            names = set(self.blocks[0].channels)
            for b in self.blocks[1:]:
                if set(b.channels) != names:
                    raise ShlError("all blocks of a position must share one channel set")


def _iter_lines(text: str):
    # splitlines handles both LF and CRLF
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            yield lineno, line.split()


def parse_channel_file(text: str, block_len: int = BLOCK_LEN, source: str = "<string>") -> np.ndarray:
    """Parse a channel file into an array of shape (n_blocks, block_len)."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    rows = []
    for lineno, tokens in _iter_lines(text):
        if len(tokens) != block_len:
            raise MalformedLine(lineno, f"expected {block_len} values, got {len(tokens)}", source)
        try:
            row = np.array([float(tok) for tok in tokens])
        except ValueError as exc:
            raise MalformedLine(lineno, f"non-numeric token ({exc})", source) from None
        if not np.all(np.isfinite(row)):
            raise MalformedLine(lineno, "non-finite value", source)
        rows.append(row)
    return np.array(rows, dtype=np.float64).reshape(len(rows), block_len)


def parse_label_file(text: str, block_len: int = BLOCK_LEN, source: str = "<string>") -> np.ndarray:
    """Parse a label file into an int array of shape (n_blocks, block_len), codes 0..8."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    rows = []
    for lineno, tokens in _iter_lines(text):
        if len(tokens) != block_len:
            raise MalformedLine(lineno, f"expected {block_len} labels, got {len(tokens)}", source)
        try:
            row = np.array([int(tok) for tok in tokens], dtype=np.int64)
        except ValueError:
            raise MalformedLine(lineno, "non-integer label token", source) from None
        if row.min() < 0 or row.max() > N_CLASSES:
            raise InvalidLabelCode(lineno, f"label code outside 0..{N_CLASSES}", source)
        rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(len(rows), block_len)


def assemble_position(channel_files: Mapping[str, np.ndarray], label_blocks: np.ndarray,
                      position: Position) -> RawPositionData:
    """Zip parsed channel arrays and labels into :class:`SensorBlock` objects.

    Gravity/orientation channels are discarded. Blocks whose labels are all
    0 (unlabeled) are dropped; partially unlabeled blocks are kept for the
    majority vote downstream.
    """
    used = {k: np.asarray(v) for k, v in channel_files.items() if not k.startswith(IGNORED_PREFIXES)}
    label_blocks = np.asarray(label_blocks)
    counts = {k: len(v) for k, v in used.items()}
    counts["labels"] = len(label_blocks)
    if len(set(counts.values())) > 1:
        raise BlockCountMismatch(f"block counts differ across files: {counts}")
    block_len = label_blocks.shape[1] if label_blocks.ndim == 2 else BLOCK_LEN
    blocks = []
    for i, labels in enumerate(label_blocks):
        if not np.any(labels):
            continue
        blocks.append(SensorBlock(position, {k: v[i] for k, v in used.items()}, labels, block_len))
    return RawPositionData(position, tuple(blocks))


def merge_positions(parts: Sequence[RawPositionData]) -> list[SensorBlock]:
    """Concatenate blocks from several positions in the given order."""
    if not parts:
        raise EmptyInput("merge_positions needs at least one position")
    return [b for part in parts for b in part.blocks]


@dataclass(frozen=True)
class Manifest:
    path: Path
    position: Position
    block_len: int
    labels: Path
    channels: dict[str, Path]
    split: Split = Split.Train


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    kv = read_key_values(path)
    try:
        position = Position.parse(kv["position"])
        labels = path.parent / kv["labels"]
    except KeyError as exc:
        raise ShlError(f"{path}: manifest is missing required key {exc.args[0]!r}") from None
    try:
        block_len = int(kv.get("block_len", BLOCK_LEN))
    except ValueError:
        raise ShlError(f"{path}: block_len must be an integer") from None
    split = Split.parse(kv["split"]) if "split" in kv else Split.Train
    channels = {k: path.parent / v for k, v in kv.items() if k not in _RESERVED_KEYS}
    return Manifest(path, position, block_len, labels, channels, split)


def write_manifest(path: str | Path, channels: Mapping[str, str], labels: str, position: Position,
                   block_len: int = BLOCK_LEN, split: Split | None = None) -> None:
    items: dict[str, object] = {"position": position.value, "block_len": block_len}
    if split is not None:
        items["split"] = split.value
    items["labels"] = labels
    items.update(channels)
    Path(path).write_text(format_key_values(items), encoding="utf-8")


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ShlError(f"cannot read {path}: {exc.strerror or exc}") from exc


def read_position(manifest: Manifest | str | Path) -> RawPositionData:
    """Load every file referenced by a manifest, in manifest order."""
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    channels = {
        name: parse_channel_file(_read(p), manifest.block_len, str(p))
        for name, p in manifest.channels.items()
        if not name.startswith(IGNORED_PREFIXES)
    }
    labels = parse_label_file(_read(manifest.labels), manifest.block_len, str(manifest.labels))
    return assemble_position(channels, labels, manifest.position)


def format_block_lines(rows: np.ndarray, fmt: str = "%.6f") -> str:
    """Inverse of the parsers: one space-joined block per line."""
    rows = np.atleast_2d(rows)
    line = " ".join([fmt] * rows.shape[1]) + "\n"
    return "".join(line % tuple(row.tolist()) for row in rows)
