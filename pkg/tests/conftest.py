import numpy as np
import pytest

from instmask._kernels import _fallback

try:
    from instmask._kernels import _core
except ImportError:
    _core = None

KERNEL_IMPLS = [pytest.param(_fallback, id="py")]
if _core is not None:
    KERNEL_IMPLS.append(pytest.param(_core, id="cy"))


@pytest.fixture(params=KERNEL_IMPLS)
def kernels(request):
    """Both kernel backends, when the compiled one is available."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_stack_maps(rng, n_tokens):
    """Per-cell stochastic maps: strictly positive, token sums equal 1."""
    w = rng.random((n_tokens, 16, 16)) + 0.01
    return w / w.sum(axis=0)
