import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from fracnls.config import SimulationConfig
from fracnls.spectral_core import Grid1D, SpectralField

CONFIG_DIR = Path(str(resources.files("fracnls") / "configs"))


def shipped(name):
    return json.loads((CONFIG_DIR / name).read_text())


SMALL_RUN = {
    "alpha": 0.5,
    "c_star": 1.0,
    "epsilon0": 0.1,
    "datum": {"family": "gaussian", "sigma": 1.5, "xi0": 2.0},
    "grid": {"half_length": 32 * np.pi, "point_count": 1024},
    "dt": 0.05,
    "t_end": 4.0,
    "output_every": 0.5,
    "ladder_t_min": 0.5,
    # algebraic dispersive tails reach the edge of this small box quickly
    "monitor": {"boundary_tolerance": 1e-4},
}


@pytest.fixture
def small_run():
    """A cheap run dict; tests copy and tweak it."""
    return copy.deepcopy(SMALL_RUN)


def make_config(d, **overrides):
    d = copy.deepcopy(d)
    d.update(overrides)
    return SimulationConfig.from_dict(d)


@pytest.fixture
def grid():
    return Grid1D(16 * np.pi, 512)


@pytest.fixture
def gaussian_field(grid):
    u = np.exp(-grid.x**2) * np.exp(1j * 0.5 * grid.x)
    return SpectralField.from_physical(grid, u).complete()
