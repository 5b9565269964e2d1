from . import kernels
from .checkpoint import CheckpointError, load_checkpoint, read_architecture, save_checkpoint
from .model import (
    Architecture,
    CellActivation,
    ForwardCache,
    InvalidProbability,
    LstmLayerParams,
    ModelParams,
    StaleCache,
    dropout,
    init_params,
    lstm_cell_forward,
    lstm_layer_forward,
    model_backward,
    model_forward,
    param_count,
    predict_proba,
    softmax,
)

__all__ = [
    "Architecture", "CellActivation", "CheckpointError", "ForwardCache", "InvalidProbability",
    "LstmLayerParams", "ModelParams", "StaleCache", "dropout", "init_params", "kernels",
    "load_checkpoint", "lstm_cell_forward", "lstm_layer_forward", "model_backward", "model_forward",
    "param_count", "predict_proba", "read_architecture", "save_checkpoint", "softmax",
]
