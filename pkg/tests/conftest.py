import numpy as np
import pytest

from jsreit.forward import solve_transmission
from jsreit.geometry import build_grid, make_ellipse, measurement_points, sparse_target_a


@pytest.fixture(scope="session")
def ellipse2000():
    return make_ellipse(10.0, 7.0, 2000)


@pytest.fixture(scope="session")
def scenario_a():
    return sparse_target_a()


@pytest.fixture(scope="session")
def grid_a(scenario_a):
    return build_grid(scenario_a)


@pytest.fixture(scope="session")
def solution_a(scenario_a):
    """Coarser forward solve of sparse target A; traces are converged well before 600 nodes."""
    return solve_transmission(scenario_a, nodes=600)


@pytest.fixture(scope="session")
def points_m100(solution_a):
    return measurement_points("m100", solution_a.mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
