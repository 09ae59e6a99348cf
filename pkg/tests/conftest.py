import numpy as np
import pytest

from src.initial_conditions import random_smooth_field
from src.spectral_core import Grid


@pytest.fixture
def grid32():
    return Grid(dim=2, points_per_axis=32)


@pytest.fixture
def grid64():
    return Grid(dim=2, points_per_axis=64)


@pytest.fixture
def line_grid():
    return Grid(dim=1, points_per_axis=64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_field(grid32, rng):
    return random_smooth_field(grid32, rng)


@pytest.fixture
def out_dir(tmp_path):
    return str(tmp_path / "artifacts")
