import numpy as np
import pytest

from soslab import double_geometric, lazy_simple_walk, transfer


@pytest.fixture(scope="session")
def dg1():
    return double_geometric(1.0)


@pytest.fixture(scope="session")
def lazy():
    return lazy_simple_walk(0.5)


@pytest.fixture(scope="session")
def dg1_n1000(dg1):
    return transfer.solve_eigenpair(1000, dg1)


@pytest.fixture(scope="session")
def dg1_n10000(dg1):
    return transfer.solve_eigenpair(10_000, dg1)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
