import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from civqr.data import Dataset  # noqa: E402


def make_dataset(y, delta, z=None, w=None):
    n = len(y)
    z = np.ones((n, 1)) if z is None else z
    w = np.ones((n, 1)) if w is None else w
    return Dataset(y, delta, z, w)


@pytest.fixture
def small_censored():
    # (y, delta) = (1,0), (2,1), (3,0)
    return make_dataset([1.0, 2.0, 3.0], [0, 1, 0])


@pytest.fixture
def grid_sample():
    """Noiseless exogenous sample with W = Z and beta(u) = (u, u, u).

    Each of nine (z1, z2) cells carries the same balanced grid of 44 levels,
    so the u = 0.5 moment is exactly zero at the true coefficients.
    """
    levels = (np.arange(44) + 0.5) / 44
    cells = [(a, b) for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)]
    z = np.array([(1.0, a, b) for a, b in cells for _ in levels])
    u = np.tile(levels, len(cells))
    t = np.exp(z.sum(axis=1) * u)
    return Dataset(t, np.ones(len(t)), z, z.copy())


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
