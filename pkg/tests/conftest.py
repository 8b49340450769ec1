import numpy as np
import pytest

from twofluid.closure import ClosureParams
from twofluid.grid import Grid

ACCEPTANCE_LINES = []


@pytest.fixture
def params():
    return ClosureParams(gamma_plus=3.0, gamma_minus=1.5, mu=1.0, nu=0.0)


@pytest.fixture
def grid1():
    return Grid(17)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(':'))):
            terminalreporter.write_line(line)
