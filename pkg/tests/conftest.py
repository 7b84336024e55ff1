import numpy as np
import pytest

from zobilevel import FunctionOracle


class StubStream:
    """Stream replacement that hands out queued arrays from ``normal``."""

    def __init__(self, *arrays):
        self.queue = [np.asarray(a, dtype=float) for a in arrays]

    def normal(self, shape):
        out = self.queue.pop(0)
        return out.reshape(shape)

    def derive(self, label, index=0):
        return self


def linear_oracle(a=None, b=None, n=None, m=None, sigma=0.0):
    a = np.zeros(n) if a is None else np.asarray(a, float)
    b = np.zeros(m) if b is None else np.asarray(b, float)
    return FunctionOracle(lambda X, Y: X @ a + Y @ b, a.size, b.size, sigma)


def quad_oracle(A_xx, A_xy, A_yy, sigma=0.0):
    """``Q(x, y) = x'Axx x/2 + x'Axy y + y'Ayy y/2``."""
    A_xx, A_xy, A_yy = map(np.asarray, (A_xx, A_xy, A_yy))

    def func(X, Y):
        return (
            0.5 * np.einsum("ij,jk,ik->i", X, A_xx, X)
            + np.einsum("ij,jk,ik->i", X, A_xy, Y)
            + 0.5 * np.einsum("ij,jk,ik->i", Y, A_yy, Y)
        )

    return FunctionOracle(func, A_xx.shape[0], A_yy.shape[0], sigma)


# filled by the acceptance suite, echoed after the run
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def stub():
    return StubStream
