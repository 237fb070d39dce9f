import numpy as np
import pytest

from audiolrp import backend


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["numpy", "numba"] if backend.numba_available() else ["numpy"])
def each_backend(request):
    previous = backend.active_backend()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)
