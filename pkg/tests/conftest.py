import numpy as np
import pytest

from csp_stream_lab import kernels


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and not kernels.HAVE_NUMBA:
        pytest.skip("numba disabled or unavailable")
    old = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
