import numpy as np
import pytest

from rangealign import _kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def backend_params():
    return [pytest.param(name, id=name) for name in _kernels.available_backends()]
