"""Two-layer LSTM classifier with dropout and a softmax head."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..data_model import N_CLASSES, ShapeMismatch, ShlError
from . import kernels


class InvalidProbability(ShlError, ValueError):
    pass


class StaleCache(ShlError, ValueError):
    pass


class CellActivation(enum.IntEnum):
    """Activation for the candidate and cell output; gates are always sigmoid."""

    Sigmoid = 0
    Tanh = 1

    @classmethod
    def parse(cls, text: str) -> "CellActivation":
        for member in cls:
            if member.name.lower() == str(text).strip().lower():
                return member
        raise ShlError(f"unknown cell activation {text!r}")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class LstmLayerParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    cell_activation: CellActivation = CellActivation.Sigmoid

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        h = self.U.shape[0]
        if self.U.shape != (h, 4 * h) or self.W.ndim != 2 or self.W.shape[1] != 4 * h or self.b.shape != (4 * h,):
            raise ShapeMismatch(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}"
            )

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class Architecture:
    feature_dim: int = 100
    hidden: tuple[int, int] = (64, 64)
    n_classes: int = N_CLASSES
    dropout_p: float = 0.25
    cell_activation: CellActivation = CellActivation.Sigmoid


@dataclass
class ModelParams:
    layer1: LstmLayerParams
    layer2: LstmLayerParams
    dense_W: np.ndarray
    dense_b: np.ndarray
    dropout_p: float = 0.25

    def __post_init__(self):
        self.dense_W = np.ascontiguousarray(self.dense_W, dtype=np.float64)
        self.dense_b = np.ascontiguousarray(self.dense_b, dtype=np.float64)
        if self.layer2.input_dim != self.layer1.hidden:
            raise ShapeMismatch("layer2 input dim must equal layer1 hidden size")
        if self.dense_W.shape != (self.layer2.hidden, self.dense_b.size):
            raise ShapeMismatch("dense kernel must be (layer2 hidden, n_classes)")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidProbability(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def architecture(self) -> Architecture:
        return Architecture(self.layer1.input_dim, (self.layer1.hidden, self.layer2.hidden),
                            self.dense_b.size, self.dropout_p, self.layer1.cell_activation)

    @property
    def feature_dim(self) -> int:
        return self.layer1.input_dim

    @property
    def n_classes(self) -> int:
        return self.dense_b.size

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in checkpoint order: layer1 W,U,b; layer2 W,U,b; dense W,b."""
        l1, l2 = self.layer1, self.layer2
        return [l1.W, l1.U, l1.b, l2.W, l2.U, l2.b, self.dense_W, self.dense_b]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "ModelParams":
        a = list(arrays)
        if len(a) != 8:
            raise ShapeMismatch("expected 8 parameter arrays")
        for new, old in zip(a, self.arrays()):
            if np.shape(new) != old.shape:
                raise ShapeMismatch(f"array shape {np.shape(new)} does not match {old.shape}")
        act = self.layer1.cell_activation
        return ModelParams(LstmLayerParams(a[0], a[1], a[2], act), LstmLayerParams(a[3], a[4], a[5], act),
                           a[6], a[7], self.dropout_p)

    def copy(self) -> "ModelParams":
        return self.with_arrays([x.copy() for x in self.arrays()])

    @property
    def n_params(self) -> int:
        return sum(x.size for x in self.arrays())


def param_count(feature_dim: int, hiddens: Sequence[int], classes: int) -> int:
    """Trainable parameters of stacked LSTM layers plus a dense softmax head."""
    total, d_in = 0, feature_dim
    for h in hiddens:
        total += 4 * h * (d_in + h + 1)
        d_in = h
    return total + d_in * classes + classes


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(arch: Architecture = Architecture(), seed: int = 0) -> ModelParams:
    """Glorot-uniform kernels, zero biases except forget-gate bias 1.0."""
    rng = np.random.default_rng(seed)
    layers, d_in = [], arch.feature_dim
    for h in arch.hidden:
        W = _glorot(rng, d_in, 4 * h)
        U = _glorot(rng, h, 4 * h)
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        layers.append(LstmLayerParams(W, U, b, arch.cell_activation))
        d_in = h
    dense_W = _glorot(rng, d_in, arch.n_classes)
    return ModelParams(layers[0], layers[1], dense_W, np.zeros(arch.n_classes), arch.dropout_p)


# single-sample reference ops -------------------------------------------------

def lstm_cell_forward(x_t, h_prev, c_prev, p: LstmLayerParams):
    """One LSTM step for a single vector input; returns ``(h_t, c_t, gates)``."""
    x_t, h_prev, c_prev = (np.asarray(v, dtype=np.float64) for v in (x_t, h_prev, c_prev))
    H = p.hidden
    if x_t.shape != (p.input_dim,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeMismatch("cell inputs do not match layer dimensions")
    z = x_t @ p.W + h_prev @ p.U + p.b
    act = sigmoid if p.cell_activation is CellActivation.Sigmoid else np.tanh
    i, f, o = sigmoid(z[:H]), sigmoid(z[H:2 * H]), sigmoid(z[3 * H:])
    g = act(z[2 * H:3 * H])
    c_t = f * c_prev + i * g
    h_t = o * act(c_t)
    return h_t, c_t, np.concatenate([i, f, g, o])


@dataclass
class LayerCache:
    X: np.ndarray  # time-major input (T, B, D)
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    act_c: np.ndarray


def _time_major(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(X, 0, 1))


def lstm_layer_forward(X: np.ndarray, p: LstmLayerParams, return_sequences: bool = True):
    """Run a layer over ``X`` of shape (T, D) or batch-first (B, T, D).

    Returns the hidden sequence (or the final hidden state) with the batch
    axis matching the input, plus the layer cache.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    Xb = X[None] if single else X
    if Xb.ndim != 3 or Xb.shape[2] != p.input_dim:
        raise ShapeMismatch(f"layer expects (..., T, {p.input_dim}) input, got {X.shape}")
    xt = _time_major(Xb)
    hs, cs, gates, act_c = kernels.forward(xt, p.W, p.U, p.b, p.cell_activation is CellActivation.Sigmoid)
    cache = LayerCache(xt, hs, cs, gates, act_c)
    out = np.swapaxes(hs[1:], 0, 1) if return_sequences else hs[-1]
    return (out[0] if single else out), cache


# dropout ---------------------------------------------------------------------

def _check_p(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``p``, else 1/(1-p)."""
    _check_p(p)
    if p == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def dropout(x: np.ndarray, p: float, train: bool = False, seed: int | np.random.Generator | None = None):
    _check_p(p)
    x = np.asarray(x, dtype=np.float64)
    if not train or p == 0.0:
        return x
    return x * dropout_mask(x.shape, p, np.random.default_rng(seed))


# full model ------------------------------------------------------------------

@dataclass
class ForwardCache:
    layer1: LayerCache
    layer2: LayerCache
    mask1: np.ndarray  # (T, B, H1)
    mask2: np.ndarray  # (B, H2)
    features: np.ndarray  # dropped-out final hidden state (B, H2)
    probs: np.ndarray  # (B, n_classes)
    single: bool = False
    train: bool = True
    shapes: tuple = field(default=())


def model_forward(X: np.ndarray, m: ModelParams, train: bool = False,
                  seed: int | np.random.Generator | None = None):
    """Class probabilities for one window (T, D) or a batch (B, T, D).

    ``train=True`` draws fresh dropout masks from ``seed`` (an int or a
    Generator); eval mode is deterministic and dropout-free.
    Returns ``(probs, cache)``.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    Xb = X[None] if single else X
    if Xb.ndim != 3 or Xb.shape[2] != m.feature_dim:
        raise ShapeMismatch(f"model expects (..., T, {m.feature_dim}) input, got {X.shape}")
    B, T, _ = Xb.shape
    sig = m.layer1.cell_activation is CellActivation.Sigmoid
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = m.dropout_p if train else 0.0

    xt = _time_major(Xb)
    hs1, cs1, g1, a1 = kernels.forward(xt, m.layer1.W, m.layer1.U, m.layer1.b, sig)
    mask1 = dropout_mask((T, B, m.layer1.hidden), p, rng)
    x2 = np.ascontiguousarray(hs1[1:] * mask1)
    sig2 = m.layer2.cell_activation is CellActivation.Sigmoid
    hs2, cs2, g2, a2 = kernels.forward(x2, m.layer2.W, m.layer2.U, m.layer2.b, sig2)
    mask2 = dropout_mask((B, m.layer2.hidden), p, rng)
    feats = hs2[-1] * mask2
    probs = softmax(feats @ m.dense_W + m.dense_b)
    cache = ForwardCache(LayerCache(xt, hs1, cs1, g1, a1), LayerCache(x2, hs2, cs2, g2, a2),
                         mask1, mask2, feats, probs, single, train,
                         tuple(x.shape for x in m.arrays()))
    return (probs[0] if single else probs), cache


def predict_proba(X: np.ndarray, m: ModelParams, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode probabilities for a batch (B, T, D), evaluated in chunks."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.zeros((0, m.n_classes))
    return np.concatenate([model_forward(X[i:i + batch_size], m)[0] for i in range(0, len(X), batch_size)])


def model_backward(cache: ForwardCache, y_true: np.ndarray, m: ModelParams) -> ModelParams:
    """Gradients of the mean categorical cross-entropy over the cached batch.

    ``y_true`` is one-hot, shape (n_classes,) or (B, n_classes). The result
    reuses :class:`ModelParams` as a container for per-parameter gradients.
    """
    probs = cache.probs
    Y = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    if Y.shape != probs.shape or cache.shapes != tuple(x.shape for x in m.arrays()):
        raise StaleCache("cache does not match the labels or the model parameters")
    B = probs.shape[0]
    sig1 = m.layer1.cell_activation is CellActivation.Sigmoid
    sig2 = m.layer2.cell_activation is CellActivation.Sigmoid

    dlogits = (probs - Y) / B
    d_dense_W = cache.features.T @ dlogits
    d_dense_b = dlogits.sum(axis=0)
    dlast = (dlogits @ m.dense_W.T) * cache.mask2

    c2 = cache.layer2
    T = c2.X.shape[0]
    dH2 = np.zeros((T, B, m.layer2.hidden))
    dH2[-1] = dlast
    dX2, dW2, dU2, db2 = kernels.backward(c2.X, m.layer2.W, m.layer2.U, c2.hs, c2.cs, c2.gates, c2.act_c,
                                          dH2, sig2)
    c1 = cache.layer1
    dH1 = np.ascontiguousarray(dX2 * cache.mask1)
    _, dW1, dU1, db1 = kernels.backward(c1.X, m.layer1.W, m.layer1.U, c1.hs, c1.cs, c1.gates, c1.act_c,
                                        dH1, sig1)
    return m.with_arrays([dW1, dU1, db1, dW2, dU2, db2, d_dense_W, d_dense_b])
