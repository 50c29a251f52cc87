import numpy as np
import pytest

from coupledvi import sets as cs
from coupledvi import system as sy


def make_toy(f=0.5):
    """n = m = 1, B = u lam, chi = u v, psi = 0, K = Lambda = [-1, 1]."""
    box = cs.box([-1.0], [1.0])
    return sy.CoupledSystem(1, 1, sy.bilinear_coupling([[1.0]]), sy.operator_linear([[1.0]]),
                            sy.zero_bifunction(1), [f], [0.0], box, box, label="toy")


def make_sp():
    return sy.build_special("SP", a=[[1.0]], b=[[1.0]], f=[1.0], Lam=cs.box([0.0], [1.0]))


def make_coercive():
    """K = Lambda = R, B = u lam, chi = u v, psi = lam mu, f = 0.5; solution (0.25, 0.25)."""
    return sy.CoupledSystem(1, 1, sy.bilinear_coupling([[1.0]]), sy.operator_linear([[1.0]]),
                            sy.operator_linear([[1.0]]), [0.5], [0.0], cs.whole_space(1), cs.whole_space(1))


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture
def sp():
    return make_sp()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
