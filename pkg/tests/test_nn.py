import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import finite_difference_grads, max_relative_error, scalar_layer, scalar_sigmoid
from shl_lstm.data_model import ShapeMismatch, one_hot
from shl_lstm.nn import (
    Architecture, CellActivation, CheckpointError, InvalidProbability, LstmLayerParams, ModelParams, StaleCache,
    dropout, init_params, kernels, load_checkpoint, lstm_cell_forward, lstm_layer_forward, model_backward,
    model_forward, param_count, save_checkpoint,
)
from shl_lstm.nn.kernels import get_kernels


def _zero_layer(d, h, act):
    return LstmLayerParams(np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), np.zeros(4 * h), act)


def _random_layer(r, d, h, act, scale=0.5):
    return LstmLayerParams(r.normal(scale=scale, size=(d, 4 * h)), r.normal(scale=scale, size=(h, 4 * h)),
                           r.normal(scale=scale, size=4 * h), act)


def _random_model(r, d, h1, h2, act, p=0.25, classes=8):
    m = init_params(Architecture(d, (h1, h2), classes, p, act), seed=int(r.integers(2**31)))
    return m.with_arrays([r.normal(scale=0.5, size=a.shape) for a in m.arrays()])


# cell ----------------------------------------------------------------------

def test_cell_zero_params_tanh_is_zero():
    h, c, _ = lstm_cell_forward(np.ones(3), np.zeros(2), np.zeros(2), _zero_layer(3, 2, CellActivation.Tanh))
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_array_equal(c, 0.0)


def test_cell_zero_params_sigmoid_closed_form():
    h, c, gates = lstm_cell_forward(np.ones(3), np.zeros(2), np.zeros(2), _zero_layer(3, 2, CellActivation.Sigmoid))
    # every gate is sigmoid(0) = 0.5, so c = 0.5 * 0.5 and h = 0.5 * sigmoid(c)
    expected_h = 0.5 * scalar_sigmoid(0.25)
    np.testing.assert_allclose(c, 0.25, rtol=0, atol=1e-15)
    np.testing.assert_allclose(h, expected_h, rtol=0, atol=1e-15)
    assert expected_h == pytest.approx(0.281088, abs=5e-7)
    np.testing.assert_allclose(gates, 0.5, atol=1e-15)


def test_cell_forget_saturation_passes_memory():
    p = _zero_layer(2, 3, CellActivation.Tanh)
    p.b[:3] = -50.0  # input gate closed
    p.b[3:6] = 50.0  # forget gate open
    c_prev = np.array([0.3, -1.2, 2.0])
    _, c, _ = lstm_cell_forward(np.ones(2), np.zeros(3), c_prev, p)
    np.testing.assert_allclose(c, c_prev, atol=1e-12)


def test_cell_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        lstm_cell_forward(np.ones(4), np.zeros(2), np.zeros(2), _zero_layer(3, 2, CellActivation.Tanh))


# layer ---------------------------------------------------------------------

def test_layer_single_timestep_equals_cell(backend, rng):
    p = _random_layer(rng, 3, 4, CellActivation.Sigmoid)
    x = rng.normal(size=3)
    h, _, _ = lstm_cell_forward(x, np.zeros(4), np.zeros(4), p)
    out, _ = lstm_layer_forward(x[None], p, return_sequences=False)
    np.testing.assert_allclose(out, h, rtol=0, atol=1e-15)


def test_layer_zero_params_tanh(backend):
    out, _ = lstm_layer_forward(np.ones((5, 7)), _zero_layer(7, 4, CellActivation.Tanh))
    assert out.shape == (5, 4)
    np.testing.assert_array_equal(out, 0.0)


@pytest.mark.parametrize("act", list(CellActivation))
def test_layer_matches_scalar_oracle(backend, act):
    r = np.random.default_rng(7)
    for _ in range(5):
        d, h, T = (int(v) for v in r.integers(1, 6, size=3))
        p = _random_layer(r, d, h, act)
        X = r.normal(size=(T, d))
        seq, _ = lstm_layer_forward(X, p)
        np.testing.assert_allclose(seq, np.array(scalar_layer(X, p.W, p.U, p.b, act == 0)), rtol=0, atol=1e-12)
        last, _ = lstm_layer_forward(X, p, return_sequences=False)
        np.testing.assert_array_equal(last, seq[-1])


def test_layer_batch_equals_per_sample(backend, rng):
    p = _random_layer(rng, 4, 3, CellActivation.Tanh)
    X = rng.normal(size=(6, 5, 4))
    batch, _ = lstm_layer_forward(X, p)
    for n in range(6):
        single, _ = lstm_layer_forward(X[n], p)
        np.testing.assert_allclose(batch[n], single, rtol=0, atol=1e-14)


def test_layer_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        lstm_layer_forward(np.ones((5, 3)), _zero_layer(4, 2, CellActivation.Tanh))


def test_backends_agree(rng):
    fwd_py, bwd_py = get_kernels("numpy").values()
    fwd_jit, bwd_jit = get_kernels("numba").values() if kernels.numba_available() else (fwd_py, bwd_py)
    X = np.ascontiguousarray(rng.normal(size=(5, 8, 6)))
    p = _random_layer(rng, 6, 4, CellActivation.Sigmoid)
    dH = rng.normal(size=(5, 8, 4))
    for sig in (True, False):
        a = fwd_py(X, p.W, p.U, p.b, sig)
        b = fwd_jit(X, p.W, p.U, p.b, sig)
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, rtol=0, atol=1e-13)
        ga = bwd_py(X, p.W, p.U, *a, dH, sig)
        gb = bwd_jit(X, p.W, p.U, *a, dH, sig)
        for u, v in zip(ga, gb):
            np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-13)


# model ---------------------------------------------------------------------

def test_zero_model_is_uniform(backend):
    m = init_params(Architecture(6, (4, 4)), seed=0).with_arrays(
        [np.zeros(a.shape) for a in init_params(Architecture(6, (4, 4))).arrays()])
    probs, _ = model_forward(np.ones((5, 6)), m)
    np.testing.assert_allclose(probs, 0.125, rtol=0, atol=1e-15)


def test_softmax_bias_shift_invariance(backend, rng):
    m = _random_model(rng, 5, 3, 4, CellActivation.Sigmoid)
    X = rng.normal(size=(2, 5, 5))
    shifted = m.with_arrays(m.arrays()[:7] + [m.dense_b + 3.7])
    np.testing.assert_allclose(model_forward(X, shifted)[0], model_forward(X, m)[0], rtol=0, atol=1e-14)


def test_train_mode_without_dropout_equals_eval(backend, rng):
    m = _random_model(rng, 5, 3, 4, CellActivation.Tanh, p=0.0)
    X = rng.normal(size=(3, 4, 5))
    np.testing.assert_array_equal(model_forward(X, m, train=True, seed=5)[0], model_forward(X, m)[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_softmax_output_is_distribution(seed):
    r = np.random.default_rng(seed)
    m = _random_model(r, 3, 2, 3, CellActivation(int(r.integers(2))))
    probs, _ = model_forward(r.normal(scale=3.0, size=(4, 3, 3)), m, train=bool(r.integers(2)), seed=seed)
    assert np.all(probs > 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_forward_is_pure(backend, rng):
    m = _random_model(rng, 4, 3, 3, CellActivation.Sigmoid)
    X = rng.normal(size=(3, 5, 4))
    a, _ = model_forward(X, m, train=True, seed=42)
    b, _ = model_forward(X, m, train=True, seed=42)
    np.testing.assert_array_equal(a, b)


def test_model_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        model_forward(np.ones((5, 7)), init_params(Architecture(6, (4, 4))))


# dropout -------------------------------------------------------------------

def test_dropout_identity_cases():
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(dropout(x, 0.0, train=True, seed=1), x)
    np.testing.assert_array_equal(dropout(x, 0.25, train=False, seed=1), x)


def test_dropout_preserves_mean_in_expectation():
    x = np.random.default_rng(0).uniform(0.5, 1.5, size=1_000_000)
    out = dropout(x, 0.25, train=True, seed=3)
    assert abs(out.mean() - x.mean()) / x.mean() < 0.02
    zeroed = np.mean(out == 0)
    assert abs(zeroed - 0.25) < 0.005
    np.testing.assert_allclose(out[out != 0], x[out != 0] / 0.75)


@pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
def test_dropout_invalid_probability(p):
    with pytest.raises(InvalidProbability):
        dropout(np.ones(3), p, train=True, seed=0)


# backward ------------------------------------------------------------------

def test_dense_bias_gradient_is_probs_minus_target(backend, rng):
    m = _random_model(rng, 4, 3, 5, CellActivation.Sigmoid)
    X = rng.normal(size=(3, 4))
    y = one_hot([6])[0]
    probs, cache = model_forward(X, m, train=True, seed=1)
    g = model_backward(cache, y, m)
    np.testing.assert_allclose(g.dense_b, probs - y, rtol=0, atol=1e-15)


def test_zero_input_zero_params_gives_zero_input_kernel_grad(backend):
    arch = Architecture(3, (4, 4), dropout_p=0.25, cell_activation=CellActivation.Tanh)
    m = init_params(arch).with_arrays([np.zeros(a.shape) for a in init_params(arch).arrays()])
    _, cache = model_forward(np.zeros((2, 3)), m, train=True, seed=0)
    g = model_backward(cache, one_hot([2])[0], m)
    np.testing.assert_array_equal(g.layer1.W, 0.0)


@pytest.mark.parametrize("act", list(CellActivation))
def test_tiny_model_matches_finite_differences(backend, act):
    r = np.random.default_rng(11)
    m = _random_model(r, 3, 4, 4, act)
    X = r.normal(size=(1, 2, 3))
    Y = one_hot([5])
    _, cache = model_forward(X, m, train=True, seed=2)
    g = model_backward(cache, Y, m)
    fd = finite_difference_grads(m.arrays(), X, Y, cache.mask1, cache.mask2, act is CellActivation.Sigmoid)
    assert max_relative_error(g.arrays(), fd) < 1e-5


def test_stale_cache_detected(rng):
    m = _random_model(rng, 3, 2, 2, CellActivation.Tanh)
    _, cache = model_forward(rng.normal(size=(2, 3, 3)), m, train=True, seed=0)
    with pytest.raises(StaleCache):
        model_backward(cache, one_hot([1, 2, 3]), m)
    other = _random_model(rng, 3, 3, 2, CellActivation.Tanh)
    with pytest.raises(StaleCache):
        model_backward(cache, one_hot([1, 2]), other)


# parameters ----------------------------------------------------------------

def test_param_count_examples():
    assert param_count(6, [64, 64], 8) == 51720
    assert param_count(100, [64, 64], 8) == 75784
    assert param_count(1, [1], 1) == 14


def test_param_count_by_array_enumeration():
    # 42240 + 33024 + 520, counted from the allocated arrays
    m = init_params(Architecture(100, (64, 64), 8))
    sizes = [a.size for a in m.arrays()]
    assert sizes == [100 * 256, 64 * 256, 256, 64 * 256, 64 * 256, 256, 64 * 8, 8]
    assert sum(sizes[:3]) == 42240 and sum(sizes[3:6]) == 33024 and sum(sizes[6:]) == 520


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 10), st.integers(1, 10), st.integers(1, 9))
def test_param_count_equals_allocation(d, h1, h2, o):
    m = init_params(Architecture(d, (h1, h2), o))
    assert m.n_params == param_count(d, [h1, h2], o)


def test_init_is_deterministic_and_follows_rules():
    arch = Architecture(100, (64, 64))
    a, b = init_params(arch, 7), init_params(arch, 7)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.arrays(), b.arrays()))
    c = init_params(arch, 8)
    assert a.layer1.W.tobytes() != c.layer1.W.tobytes()
    for layer in (a.layer1, a.layer2):
        h = layer.hidden
        np.testing.assert_array_equal(layer.b[h:2 * h], 1.0)
        np.testing.assert_array_equal(np.delete(layer.b, np.s_[h:2 * h]), 0.0)
    bound = math.sqrt(6.0 / (100 + 256))
    assert np.abs(a.layer1.W).max() <= bound
    assert np.abs(a.layer1.U).max() <= math.sqrt(6.0 / (64 + 256))
    np.testing.assert_array_equal(a.dense_b, 0.0)
    assert a.dropout_p == 0.25 and a.layer1.cell_activation is CellActivation.Sigmoid


def test_model_params_validation():
    l1 = _zero_layer(3, 4, CellActivation.Tanh)
    with pytest.raises(ShapeMismatch):
        ModelParams(l1, _zero_layer(5, 2, CellActivation.Tanh), np.zeros((2, 8)), np.zeros(8))
    with pytest.raises(InvalidProbability):
        ModelParams(l1, _zero_layer(4, 2, CellActivation.Tanh), np.zeros((2, 8)), np.zeros(8), dropout_p=1.0)


# checkpoint ----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    m = _random_model(rng, 6, 5, 3, CellActivation.Tanh, p=0.1)
    save_checkpoint(m, tmp_path / "c.bin")
    back = load_checkpoint(tmp_path / "c.bin")
    assert back.architecture == m.architecture
    assert all(x.tobytes() == y.tobytes() for x, y in zip(m.arrays(), back.arrays()))


def test_checkpoint_layout(tmp_path):
    m = init_params(Architecture(100, (64, 64)), seed=1)
    save_checkpoint(m, tmp_path / "c.bin")
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:4] == b"MNCK"
    header = 4 + 4 * 5 + 8 + 4
    assert len(raw) == header + 8 * 75784
    first = np.frombuffer(raw, "<f8", 1, header)[0]
    assert first == m.layer1.W[0, 0]
    last = np.frombuffer(raw, "<f8", 1, len(raw) - 8)[0]
    assert last == m.dense_b[-1]


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.bin")
    m = init_params(Architecture(3, (2, 2)))
    save_checkpoint(m, tmp_path / "c.bin")
    (tmp_path / "t.bin").write_bytes((tmp_path / "c.bin").read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.bin")


# backend selection ---------------------------------------------------------

@pytest.mark.skipif(not kernels.numba_available(), reason="numba not installed")
def test_auto_backend_dispatches_on_batch_width(rng):
    auto, jit, py = get_kernels("auto"), get_kernels("numba"), get_kernels("numpy")
    p = _random_layer(rng, 5, 3, CellActivation.Tanh)
    for B, ref in ((kernels.AUTO_NUMBA_MAX_BATCH, jit), (kernels.AUTO_NUMBA_MAX_BATCH + 1, py)):
        X = rng.normal(size=(4, B, 5))
        dH = rng.normal(size=(4, B, 3))
        a = auto["lstm_forward"](X, p.W, p.U, p.b, False)
        r = ref["lstm_forward"](X, p.W, p.U, p.b, False)
        assert all(u.tobytes() == v.tobytes() for u, v in zip(a, r))
        ga = auto["lstm_backward"](X, p.W, p.U, *a, dH, False)
        gr = ref["lstm_backward"](X, p.W, p.U, *r, dH, False)
        assert all(u.tobytes() == v.tobytes() for u, v in zip(ga, gr))


@pytest.mark.parametrize("value, expected", [("numpy", "numpy"), ("", "auto"), ("NUMBA", "numba")])
def test_backend_env_flag(value, expected):
    import os
    import subprocess
    import sys
    if expected != "numpy" and not kernels.numba_available():
        expected = "numpy"
    env = dict(os.environ, SHL_LSTM_BACKEND=value)
    res = subprocess.run([sys.executable, "-c", "from shl_lstm.nn import kernels; print(kernels.backend)"],
                         capture_output=True, text=True, env=env, check=True)
    assert res.stdout.strip() == expected


def test_backend_env_flag_rejects_unknown():
    import os
    import subprocess
    import sys
    env = dict(os.environ, SHL_LSTM_BACKEND="cuda")
    res = subprocess.run([sys.executable, "-c", "import shl_lstm.nn"], capture_output=True, text=True, env=env)
    assert res.returncode != 0 and "SHL_LSTM_BACKEND" in res.stderr


def test_set_backend_returns_previous():
    previous = kernels.set_backend("numpy")
    try:
        assert kernels.set_backend("numpy") == "numpy"
        with pytest.raises(ValueError):
            kernels.set_backend("cuda")
    finally:
        kernels.set_backend(previous)


def test_numpy_fallback_without_numba():
    import os
    import subprocess
    import sys
    code = (
        "import sys; sys.modules['numba'] = None\n"
        "import numpy as np\n"
        "from shl_lstm.nn import Architecture, init_params, kernels, predict_proba\n"
        "m = init_params(Architecture(4, (3, 3)))\n"
        "print(kernels.backend, predict_proba(np.zeros((2, 5, 4)), m).shape)\n"
    )
    env = {k: v for k, v in os.environ.items() if k != "SHL_LSTM_BACKEND"}
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert res.stdout.split() == ["numpy", "(2,", "8)"]
