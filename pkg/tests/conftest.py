import numpy as np
import pytest

from srgeo.builtins import make_structure


@pytest.fixture(scope="session")
def heisenberg():
    return make_structure("heisenberg")


@pytest.fixture(scope="session")
def grushin():
    return make_structure("grushin")


@pytest.fixture(scope="session")
def singruppo():
    return make_structure("singruppo")


@pytest.fixture(scope="session")
def euclid2():
    return make_structure("euclidean:2")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
