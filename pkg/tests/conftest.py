import numpy as np
import pytest

from madelung_strain.grid import Grid


@pytest.fixture
def line():
    return Grid.euclidean((201,), 0.05, -5.0)


@pytest.fixture
def cube():
    return Grid.euclidean((33, 33, 33), 0.1, (-1.6, -1.6, -1.6))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
