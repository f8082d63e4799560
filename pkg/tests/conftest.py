import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from omegaflow.boxcover import BoxMap, BoxSet, Grid  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)


def disk(grid, center, radius):
    """Boxes whose centers lie within ``radius`` of ``center``."""
    near = np.linalg.norm(grid.centers() - np.asarray(center, dtype=float), axis=1) <= radius
    return BoxSet.from_flat(grid, np.flatnonzero(near), assume_sorted=True)


def eight_state_fixture():
    """Hand-built map on 8 boxes of [0, 8]: a transient arm, a 2-cycle on {4, 5}, a fixed box 7."""
    grid = Grid((0.0,), (8.0,), (8,))
    succ = {0: 1, 1: 2, 2: 3, 3: 4, 4: 5, 5: 4, 6: 5, 7: 7}
    F = BoxMap.from_edges(grid, {(s,): [(t,)] for s, t in succ.items()}, tau=1.0)
    return grid, F


@pytest.fixture
def fixture8():
    return eight_state_fixture()
