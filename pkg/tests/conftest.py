"""Shared helpers: small grids and rasterized disks used across the suite."""

import numpy as np
import pytest

from gmcflow import Anisotropy, GridSpec, WulffSpec
from gmcflow.anisotropy import wulff_mask


def square_grid(cells, half=1.0, n=2):
    return GridSpec((cells,) * n, (-half,) * n, (half,) * n)


def disk(grid, center, r):
    # Euclidean Wulff shape is a ball
    a = Anisotropy.euclidean(grid.n)
    return wulff_mask(a, WulffSpec(np.asarray(center, dtype=float), r), grid)


@pytest.fixture
def grid64():
    return square_grid(64)


@pytest.fixture
def grid96():
    return square_grid(96)


@pytest.fixture
def grid128():
    return square_grid(128)
