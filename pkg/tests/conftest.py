import numpy as np
import pytest

from rsgrowth.grid import GridSpec, WeightFunction
from rsgrowth.model import builtin

# Acceptance criteria register one summary line each here.
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid1d():
    return GridSpec([-5.0], [5.0], [41])


@pytest.fixture(scope="session")
def grid2d():
    return GridSpec([-1.0, -2.0], [1.0, 2.0], [7, 9])


@pytest.fixture(scope="session")
def abs_weight():
    return WeightFunction.affine_norm(0.0, 1.0)


@pytest.fixture(scope="session")
def control_free():
    return builtin("control_free")


@pytest.fixture(scope="session")
def example2_small():
    return builtin("example2_clipped", {"grid_points": 41, "action_resolution": 4})


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
