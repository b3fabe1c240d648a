import numpy as np
import pytest

from dfheat.mesh import crisscross_square, lshape_mesh, two_triangle_square


@pytest.fixture
def square2():
    return two_triangle_square()


@pytest.fixture
def crisscross():
    return crisscross_square(2)


@pytest.fixture
def lshape():
    return lshape_mesh(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
