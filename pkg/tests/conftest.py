import numpy as np
import pytest

from nscahn.initial import make_initial
from nscahn.mesh import build_grid
from nscahn.potentials import PotentialConfig

SPINODAL = {"kind": "seeded_random", "amplitude": 0.05, "seed": 1234, "modes": 3, "mu0": 1.0}


@pytest.fixture
def cfg():
    return PotentialConfig()


@pytest.fixture
def grid1d():
    return build_grid("interval1d", 33)


@pytest.fixture
def grid2d():
    return build_grid("slab2d", 8, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def spinodal_1d(grid1d):
    return make_initial(SPINODAL, grid1d)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
