import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from geometry.space import build_interval_grid, build_torus_grid
from spectral.operator import build_operator


@pytest.fixture(scope="session")
def torus_1d():
    """64-point torus of period 2 pi"""
    space = build_torus_grid(1, 64, 2 * np.pi)
    return build_operator(space)


@pytest.fixture(scope="session")
def torus_2d():
    space = build_torus_grid(2, 16, 2 * np.pi)
    return build_operator(space)


@pytest.fixture(scope="session")
def dirichlet_interval():
    space = build_interval_grid(40, 1.0, "dirichlet")
    return build_operator(space)


@pytest.fixture(scope="session")
def decay_torus():
    """Fine torus for dispersive decay runs: period 8, 4800 points on the Fourier path"""
    space = build_torus_grid(1, 4800, 8.0)
    return build_operator(space)


@pytest.fixture(scope="session")
def long_torus():
    """Period 16, 2048 points; small enough for a dense eigensystem"""
    space = build_torus_grid(1, 2048, 16.0)
    return build_operator(space)
