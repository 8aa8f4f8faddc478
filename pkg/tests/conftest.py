import warnings

import numpy as np
import pytest

from whisker.models import model_A
from whisker.newton import TorusSolution, solve


@pytest.fixture(scope="session")
def model_a_small():
    """Model A at eps = 0.01 (inside the convergence region), N = 128, solved once."""
    m = model_A(0.01)
    sol0 = TorusSolution.seed(m.seed_torus(128), m.system, m.omega0, m.seed_splitting(128))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve(sol0, m.system)
    return m, sol


@pytest.fixture
def rng():
    return np.random.default_rng(20240519)


ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str):
    """Log one acceptance verdict; printed as a block at the end of the run."""
    line = f"{criterion:<10} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
