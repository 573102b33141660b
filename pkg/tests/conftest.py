import numpy as np
import pytest


def dft_by_definition(x):
    """O(n^2) forward DFT straight from the summation formula."""
    x = np.asarray(x, dtype=np.complex128)
    side = x.shape[0]
    r = np.arange(side)
    w = np.exp(-2j * np.pi * np.outer(r, r) / side)
    return w @ x @ w.T


@pytest.fixture
def gen():
    # test-local randomness; the package's own streams are tested separately
    return np.random.default_rng(20240601)


def random_complex(gen, side):
    return gen.normal(size=(side, side)) + 1j * gen.normal(size=(side, side))


# acceptance criterion number -> "[PASS] ..." / "[FAIL] ..." line
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
