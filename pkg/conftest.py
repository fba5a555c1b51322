"""
Shared pytest fixtures for the BSC QoE toolkit.

Acceptance-scale Monte Carlo checks are marked `slow` and only run with --runslow.
"""

import pytest

from app.models import SessionParams


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale simulations")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale Monte Carlo, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_params(N, x, phi, rho=1.0, mu=1.0):
    return SessionParams(lam=rho * mu, mu=mu, file_size_N=N, startup_x=x, offset_phi=phi)


@pytest.fixture
def reference_session():
    """x = 40, phi = 50 at rho = 0.95, the reference operating point."""
    return make_params(1000, 40, 50, rho=0.95)


@pytest.fixture
def oracle_session():
    """N = 8, x = 1, phi = 2 at rho = 1, small enough to enumerate."""
    return make_params(8, 1, 2, rho=1.0)


def oracle_grid():
    """Every (N, x, phi, rho) of the exact-comparison grid where the closed forms are exact."""
    grid = []
    for N in range(1, 9):
        for x in range(1, 4):
            for phi in range(1, 5):
                if x + phi - 1 > N or phi > x + 1:
                    continue
                for rho in (0.5, 1.0, 2.0):
                    grid.append((N, x, phi, rho))
    return grid
