import math

import numpy as np
import pytest

from slabwave.builders import bump_profile
from slabwave.slabgeom import Grid2D, SlabGeometry


@pytest.fixture(scope="session")
def geom1():
    """Slab of thickness pi with one axial mode and unit aperture."""
    return SlabGeometry(math.pi, 1, 1.0)


@pytest.fixture(scope="session")
def grid32():
    return Grid2D.covering(1.0, 1 / 32)


def bump_potential(grid, amplitude=1.0, radius=0.4):
    return amplitude * bump_profile(grid.radius(), radius)



def pytest_terminal_summary(terminalreporter):
    from tests._acceptance import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
