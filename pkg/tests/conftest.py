import math

import numpy as np
import pytest

from matchburn import MarketSpec, ShockSpec

LN2, LN3 = math.log(2.0), math.log(3.0)


def market(alpha, gamma, n, m, shocks="logit", sigma=1.0):
    """Small market with types named x1.., y1..; ``shocks=None`` for deterministic."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    X, Y = alpha.shape
    spec_shocks = None
    if shocks == "logit":
        spec_shocks = ShockSpec("logit", sigma=sigma)
    elif shocks is not None:
        spec_shocks = shocks
    return MarketSpec([f"x{i + 1}" for i in range(X)], [f"y{j + 1}" for j in range(Y)],
                      n, m, alpha, gamma, spec_shocks)


@pytest.fixture
def excess_market():
    """One type per side, two passengers per taxi, zero utilities."""
    return market([[0.0]], [[0.0]], [2.0], [1.0])


@pytest.fixture
def symmetric_market():
    return market([[0.0]], [[0.0]], [1.0], [1.0])


@pytest.fixture
def intro_market():
    """Two passenger types valuing the single taxi type at 2 and 1."""
    return market([[2.0], [1.0]], [[0.0], [0.0]], [1.0, 1.0], [1.0])


@pytest.fixture
def intro_deterministic():
    return market([[2.0], [1.0]], [[0.0], [0.0]], [1, 1], [1], shocks=None)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
