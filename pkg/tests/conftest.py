import numpy as np
import pytest

from hyperctl import Coupling, SystemSpec
from hyperctl.config import bump_coupling


def spec_feedback_1(**kw):
    return SystemSpec(1, 2, (1.0, 1.0, 2.0), np.zeros((3, 3)), [[2.0, 1.0]], **kw)


def spec_feedback_2(**kw):
    B = [[1.0, 0.0, 0.0], [2.0, 0.0, 1.0], [-1.0, -1.0, 1.0]]
    return SystemSpec(3, 3, (4.0, 2.0, 1.0, 1.0, 2.0, 4.0), np.zeros((6, 6)), B, **kw)


C3 = np.array([[0.0, 1.0, 0.5], [0.3, 0.0, 1.0], [-0.4, 0.6, 0.0]])


def spec_k1m2(gamma=0.1):
    """One negative, two positive components, smooth coupling vanishing at both ends."""
    return SystemSpec(1, 2, (1.0, 1.0, 2.0), bump_coupling(C3), [[2.0, 1.0]], gamma=gamma)


def smooth_data(n, seed=0):
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.5, 1.5, n)
    ph = rng.uniform(0, 1, n)

    def w0(x):
        return amp[:, None] * np.sin(np.pi * x)[None] ** 2 * np.cos(np.pi * (x[None] - ph[:, None]))

    return w0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
