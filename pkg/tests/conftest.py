import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from brunovsky.core import StaircasePair
from brunovsky.staircase import index_summary
from helpers import ACCEPTANCE_LINES

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def three_state():
    """Hand-worked 3-state staircase pair with indices (2, 1)."""
    A_s = np.zeros((3, 3))
    A_s[2, 0] = 1.0
    B_s = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    stair = StaircasePair(A_s, B_s, np.eye(3), (2, 1))
    return stair, index_summary(stair)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

