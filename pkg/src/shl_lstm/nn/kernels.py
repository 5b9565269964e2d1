"""LSTM layer kernels (forward and BPTT) over time-major batches.

Both kernels are written in the numpy subset numba understands, so the same
source runs interpreted or under ``numba.njit``. The backend is picked from
the ``SHL_LSTM_BACKEND`` environment variable at import time and can be
switched with :func:`set_backend`:

``numpy``
    interpreted numpy; its vectorised transcendentals win on wide batches.
``numba``
    the jitted kernels; they remove per-timestep interpreter overhead and
    win on narrow batches (single-sample inference).
``auto`` (default when numba is installed)
    numba for batches of at most ``AUTO_NUMBA_MAX_BATCH`` rows, numpy above.
    ``benchmarks/bench_kernels.py`` measures the crossover.

Without numba installed the numpy path is used.

Array layout: ``X`` (T, B, D); ``W`` (D, 4H); ``U`` (H, 4H); ``b`` (4H,).
Gates are packed along the last axis in the order [input, forget, candidate,
output].
"""
from __future__ import annotations

import os
import warnings

import numpy as np


def lstm_forward(X, W, U, b, sigmoid_cell):
    """Run one LSTM layer from a zero state.

    Returns ``hs`` and ``cs`` of shape (T+1, B, H) with index 0 holding the
    initial zero state, post-activation ``gates`` (T, B, 4H) and the cell
    output activation ``act_c`` (T, B, H).
    """
    T, B, D = X.shape
    H = U.shape[0]
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    act_c = np.empty((T, B, H))
    xw = np.dot(X.reshape(T * B, D), W).reshape(T, B, 4 * H)
    for t in range(T):
        z = xw[t] + np.dot(hs[t], U) + b
        # sigmoid via tanh: no overflow for large |z|
        i = 0.5 * (1.0 + np.tanh(0.5 * z[:, :H]))
        f = 0.5 * (1.0 + np.tanh(0.5 * z[:, H:2 * H]))
        o = 0.5 * (1.0 + np.tanh(0.5 * z[:, 3 * H:]))
        if sigmoid_cell:
            g = 0.5 * (1.0 + np.tanh(0.5 * z[:, 2 * H:3 * H]))
        else:
            g = np.tanh(z[:, 2 * H:3 * H])
        c = f * cs[t] + i * g
        if sigmoid_cell:
            a = 0.5 * (1.0 + np.tanh(0.5 * c))
        else:
            a = np.tanh(c)
        cs[t + 1] = c
        hs[t + 1] = o * a
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        act_c[t] = a
    return hs, cs, gates, act_c


def lstm_backward(X, W, U, hs, cs, gates, act_c, dH, sigmoid_cell):
    """Backpropagate ``dH`` (T, B, H), the loss gradient w.r.t. every h_t,
    through one layer. Returns ``(dX, dW, dU, db)``.
    """
    T, B, D = X.shape
    H = U.shape[0]
    UT = np.ascontiguousarray(U.T)
    WT = np.ascontiguousarray(W.T)
    dz_all = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        a = act_c[t]
        dh = dH[t] + dh_next
        if sigmoid_cell:
            dc = dc_next + dh * o * a * (1.0 - a)
        else:
            dc = dc_next + dh * o * (1.0 - a * a)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        if sigmoid_cell:
            dz[:, 2 * H:3 * H] = dc * i * g * (1.0 - g)
        else:
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * a * o * (1.0 - o)
        dc_next = dc * f
        dh_next = np.dot(dz, UT)
        dz_all[t] = dz
    dz_flat = dz_all.reshape(T * B, 4 * H)
    dW = np.dot(np.ascontiguousarray(X.reshape(T * B, D).T), dz_flat)
    dU = np.dot(np.ascontiguousarray(hs[:T].reshape(T * B, H).T), dz_flat)
    db = dz_flat.sum(axis=0)
    dX = np.dot(dz_flat, WT).reshape(T, B, D)
    return dX, dW, dU, db


_PY_KERNELS = {"lstm_forward": lstm_forward, "lstm_backward": lstm_backward}
_JIT_KERNELS: dict | None = None


def numba_available() -> bool:
    """True when the jitted kernels can compile (numba plus scipy for BLAS-backed ``np.dot``)."""
    try:
        import numba  # noqa: F401
        import scipy.linalg.cython_blas  # noqa: F401
    except ImportError:
        return False
    return True


def _jit_kernels() -> dict:
    global _JIT_KERNELS
    if _JIT_KERNELS is None:
        import numba

        _JIT_KERNELS = {name: numba.njit(cache=True, nogil=True)(fn) for name, fn in _PY_KERNELS.items()}
    return _JIT_KERNELS


AUTO_NUMBA_MAX_BATCH = 4
BACKENDS = ("auto", "numba", "numpy")


def _auto_kernels() -> dict:
    jit = _jit_kernels()
    jf, jb = jit["lstm_forward"], jit["lstm_backward"]

    def forward_auto(X, W, U, b, sigmoid_cell):
        fn = jf if X.shape[1] <= AUTO_NUMBA_MAX_BATCH else lstm_forward
        return fn(X, W, U, b, sigmoid_cell)

    def backward_auto(X, W, U, hs, cs, gates, act_c, dH, sigmoid_cell):
        fn = jb if X.shape[1] <= AUTO_NUMBA_MAX_BATCH else lstm_backward
        return fn(X, W, U, hs, cs, gates, act_c, dH, sigmoid_cell)

    return {"lstm_forward": forward_auto, "lstm_backward": backward_auto}


def get_kernels(name: str) -> dict:
    if name == "numpy":
        return dict(_PY_KERNELS)
    if name == "numba":
        return dict(_jit_kernels())
    if name == "auto":
        return _auto_kernels()
    raise ValueError(f"unknown backend {name!r} (expected one of {', '.join(BACKENDS)})")


backend = "numpy"
forward = lstm_forward
backward = lstm_backward


def set_backend(name: str) -> str:
    """Select the kernel implementation used by the model; returns the previous backend."""
    global backend, forward, backward
    k = get_kernels(name)
    previous = backend
    backend, forward, backward = name, k["lstm_forward"], k["lstm_backward"]
    return previous


def _default_backend() -> str:
    requested = os.environ.get("SHL_LSTM_BACKEND", "").strip().lower() or "auto"
    if requested not in BACKENDS:
        raise ValueError(f"SHL_LSTM_BACKEND must be one of {', '.join(BACKENDS)}, got {requested!r}")
    if requested != "numpy" and not numba_available():
        if requested == "numba":
            warnings.warn("SHL_LSTM_BACKEND=numba but numba is not installed; using numpy", stacklevel=2)
        return "numpy"
    return requested


set_backend(_default_backend())
