import numpy as np
import pytest

from markovpop.model import build_seir, build_sir

SIR_THETA = np.array([0.5, 0.15])
SIR_X0 = np.array([0.95, 0.05])
PUBLISHED_SEIR_RATES = np.array([3.108, 0.526, 0.876])


@pytest.fixture
def sir():
    return build_sir()


@pytest.fixture
def seir():
    return build_seir()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_simplex(rng, n, d):
    """Points with nonnegative entries summing to less than one."""
    w = rng.dirichlet(np.ones(d + 1), size=n)
    return w[:, :d]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
