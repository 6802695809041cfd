import numpy as np
import pytest

from fiberopt.fem2d import Helmholtz, Mesh
from fiberopt.tensor2d import build_catalog
from fiberopt.topoderiv import build_table


@pytest.fixture(scope="session")
def catalog():
    return build_catalog()


@pytest.fixture(scope="session")
def table(catalog):
    return build_table(catalog, 36)


@pytest.fixture(scope="session")
def small_mesh():
    return Mesh(2.0, 1.0, 20, 10)


@pytest.fixture(scope="session")
def small_helmholtz(small_mesh):
    return Helmholtz(small_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
