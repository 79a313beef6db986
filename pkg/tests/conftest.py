import numpy as np
import pytest

from relaystop.dist import IndexDistribution
from relaystop.policy import StageSchedule, solve_thresholds


@pytest.fixture(scope="session")
def dist():
    return IndexDistribution()


@pytest.fixture(scope="session")
def policy10(dist):
    return solve_thresholds(StageSchedule(10, 0.1), dist)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
