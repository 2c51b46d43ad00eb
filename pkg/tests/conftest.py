import numpy as np
import pytest

from tridoa.geometry import ArrayGeometry
from tridoa.lattice import fibonacci_lattice, synthesize_mappings


@pytest.fixture(scope="session")
def g():
    return ArrayGeometry(0.1, 0.05, 0.12)


@pytest.fixture(scope="session")
def lat(g):
    return synthesize_mappings(fibonacci_lattice(10_000), g)


@pytest.fixture(scope="session")
def small_lat(g):
    return synthesize_mappings(fibonacci_lattice(500), g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
