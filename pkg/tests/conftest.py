import numpy as np
import pytest

from shl_lstm.nn import kernels


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    if request.param == "numba" and not kernels.numba_available():
        pytest.skip("numba not installed")
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

