"""LSTM transportation-mode classification from smartphone sensor blocks."""
from .data_model import (
    BLOCK_LEN, LABELS, N_CLASSES, Dataset, Label, OutOfRange, Position, SensorBlock, ShapeMismatch, ShlError,
    Split, WindowSample, label_from_code,
)

__version__ = "0.1.0"

__all__ = [
    "BLOCK_LEN", "LABELS", "N_CLASSES", "Dataset", "Label", "OutOfRange", "Position", "SensorBlock",
    "ShapeMismatch", "ShlError", "Split", "WindowSample", "label_from_code",
]
