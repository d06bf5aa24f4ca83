import numpy as np
import pytest

from remoments import InitialMoments, KernelSpec, OscillatorParams, make_kernel


@pytest.fixture
def ou():
    return make_kernel(KernelSpec("OU", 1.0, 1.0))


@pytest.fixture
def gf():
    return make_kernel(KernelSpec("GaussianFilter", 1.0, np.pi / 4))


@pytest.fixture
def nonlinear_params():
    return OscillatorParams(-1.0, -0.7, 1.0, 0.4)


@pytest.fixture
def linear_params():
    return OscillatorParams(-1.0, 0.0, 1.0, 0.0)


@pytest.fixture
def init():
    return InitialMoments(2.0, 1.0)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary and assert it."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
