"""Binary checkpoint format for :class:`ModelParams`.

Layout (little endian): magic ``MNCK``, u32 version, u32 feature_dim,
u32 hidden1, u32 hidden2, u32 n_classes, f64 dropout_p, u32 cell-activation
code (0 = sigmoid, 1 = tanh), then the eight parameter arrays as row-major
f64 in :meth:`ModelParams.arrays` order.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..data_model import ShlError
from .model import Architecture, CellActivation, ModelParams, init_params

MAGIC = b"MNCK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIdI")


class CheckpointError(ShlError):
    pass


def checkpoint_bytes(m: ModelParams) -> bytes:
    a = m.architecture
    header = _HEADER.pack(MAGIC, VERSION, a.feature_dim, a.hidden[0], a.hidden[1], a.n_classes,
                          float(a.dropout_p), int(a.cell_activation))
    return header + b"".join(np.ascontiguousarray(x, dtype="<f8").tobytes() for x in m.arrays())


def save_checkpoint(m: ModelParams, path: str | Path) -> None:
    """Write atomically so a crash never leaves a truncated best checkpoint."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(m))
    os.replace(tmp, path)


def read_architecture(data: bytes) -> Architecture:
    if len(data) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, d, h1, h2, o, p, act = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        act = CellActivation(act)
    except ValueError:
        raise CheckpointError(f"unknown cell activation code {act}") from None
    return Architecture(d, (h1, h2), o, p, act)


def load_checkpoint(path: str | Path) -> ModelParams:
    data = Path(path).read_bytes()
    arch = read_architecture(data)
    template = init_params(arch, seed=0)
    arrays, offset = [], _HEADER.size
    for ref in template.arrays():
        nbytes = ref.size * 8
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated parameter payload")
        arrays.append(np.frombuffer(data, "<f8", ref.size, offset).reshape(ref.shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    return template.with_arrays(arrays)
