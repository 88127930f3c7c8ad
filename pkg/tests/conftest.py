import numpy as np
import pytest

from oracles import ACCEPTANCE_LINES
from pointer_sim import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def params4(rng):
    return ModelParams.random(4, rng, omega_range=(-2.0, 2.0), v_range=(-1.0, 1.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
