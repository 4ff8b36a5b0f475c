import numpy as np
import pytest

from hilbmap.geometry import PolarizedModel
from hilbmap.potentials import default_grid, random_radial_potential


@pytest.fixture(scope="session")
def grid():
    return default_grid(1025)


@pytest.fixture
def model1():
    return PolarizedModel(1)


@pytest.fixture
def model2():
    return PolarizedModel(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


@pytest.fixture
def random_phi(model1, grid, rng):
    return random_radial_potential(model1, rng, grid)
