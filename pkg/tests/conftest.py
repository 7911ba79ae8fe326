import math

import pytest
from hypothesis import HealthCheck, settings

from poissonrep.intensity import PairTail, make_spec

settings.register_profile(
    "repo", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


def pair(p):
    return make_spec(1, [([(0,), (1,)], p)])


def single(p):
    return make_spec(1, [([(0,)], p)])


def geometric(c, r):
    return make_spec(1, pair_tail=PairTail("geometric", c=c, r=r))


@pytest.fixture
def pair01():
    return pair(0.1)


@pytest.fixture
def pair05():
    return pair(0.5)


@pytest.fixture
def spec49():
    return make_spec(1, [([(0,)], 0.5), ([(0,), (1,)], 0.1)])


@pytest.fixture
def grid2d():
    return make_spec(2, [([(0, 0)], 0.3), ([(0, 0), (1, 0)], 0.012), ([(0, 0), (0, 1)], 0.012)])


def zscore(est, p, n):
    se = math.sqrt(p * (1 - p) / n)
    return abs(est - p) / se if se > 0 else (0.0 if est == p else math.inf)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
