import numpy as np
import pytest

from riesz_op import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def small_grid():
    return GridSpec(M=32)


@pytest.fixture
def square_grid():
    return GridSpec(M=32, d=2)
