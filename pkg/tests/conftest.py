import numpy as np
import pytest

from incopt.instances import generate_rpr, generate_rms, generate_bd, generate_rpca
from incopt.problem import AffineL1Problem


@pytest.fixture(scope="session")
def small_rpr():
    return generate_rpr(n=8, m=80, p=0.2, seed=3)


@pytest.fixture(scope="session")
def small_rms():
    return generate_rms(n=6, r=2, m=60, p=0.2, seed=3)


@pytest.fixture(scope="session")
def small_bd():
    return generate_bd(n1=5, n2=4, m=72, p=0.2, seed=3)


@pytest.fixture(scope="session")
def small_rpca():
    return generate_rpca(n=8, r=2, p=0.1, seed=3)


@pytest.fixture(scope="session")
def abs1():
    """f(x) = |x| with one component."""
    return AffineL1Problem([[1.0]], [0.0])


def rpr_problem(rows, b):
    from incopt.instances import RprProblem
    return RprProblem(np.atleast_2d(np.asarray(rows, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float)))


def rms_problem(mats, y, r):
    from incopt.instances import RmsProblem
    return RmsProblem(np.asarray(mats, dtype=float), np.atleast_1d(np.asarray(y, dtype=float)), r)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
