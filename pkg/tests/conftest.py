import numpy as np
import pytest

from layercraft.mesh import TensorGrid, uniform_grid


def ref_f(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y) * x * y


def one_f(x, y):
    return 1.0 + 0.0 * np.asarray(x) * np.asarray(y)


def square(N):
    g = uniform_grid(N)
    return TensorGrid(g, g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
