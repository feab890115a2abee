import os

import hypothesis
import numpy as np
import pytest

from backaction import gridsolver

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def _point_run(n_points, dt, epsilon=1.0, gamma=2.0, z0=0.0, t_final=5.0, convention="paper_literal"):
    grid = gridsolver.Grid1D(-30.0, 30.0, n_points)
    prof = gridsolver.AbsorberProfile((gridsolver.Absorber(z0, epsilon),), convention)
    return gridsolver.run_detection(grid, prof, gridsolver.init_lorentzian(grid, gamma, 1), t_final, dt)


@pytest.fixture(scope="session")
def fine_run():
    """dz = 0.005, dt_max = 2.5e-4: the reference resolution."""
    return _point_run(12001, 2.5e-4)


@pytest.fixture(scope="session")
def medium_run():
    return _point_run(6001, 5e-4)


@pytest.fixture(scope="session")
def coarse_run():
    return _point_run(3001, 1e-3)


@pytest.fixture(scope="session")
def point_run():
    return _point_run


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
