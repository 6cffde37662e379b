"""Shared ground states for the test suite; solved once per session."""

import pytest

from field_core import make_grid, make_params
from ground_state import find_ground_state


@pytest.fixture(scope="session")
def cubic_params():
    return make_params(3, 3.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def cubic_grid():
    return make_grid(3, 20.0, 1024)


@pytest.fixture(scope="session")
def cubic_gs(cubic_params, cubic_grid):
    return find_ground_state(cubic_params, cubic_grid)


@pytest.fixture(scope="session")
def quadratic_params():
    return make_params(3, 2.0, 1.0, 0.3)


@pytest.fixture(scope="session")
def quadratic_gs(quadratic_params):
    return find_ground_state(quadratic_params, make_grid(3, 20.0, 1024))
