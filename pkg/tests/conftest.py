import pytest

from mstpath.topology import load_topology
from topogen import make_topology


@pytest.fixture(scope="session")
def paper_topo():
    return load_topology("paper-topo")


@pytest.fixture(scope="session")
def ring4():
    return load_topology("ring4")


@pytest.fixture
def triangle():
    # s1-s2 (1), s1-s3 (2), s2-s3 (3), h1 on s1
    return make_topology([("s1", "s2", 1), ("s1", "s3", 2), ("s2", "s3", 3)], {"h1": "s1"})


@pytest.fixture
def line3():
    return make_topology([("s1", "s2"), ("s2", "s3")], {"h1": "s1", "h3": "s3"})
