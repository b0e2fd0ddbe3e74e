import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ou_phase_tracking.model import ModelParams  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale Monte Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale Monte Carlo check (minutes); needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def unit_params():
    return ModelParams(lam=1.0, kappa=1.0, alpha=1.0)


@pytest.fixture
def short_params():
    """Unit model on a grid small enough for many trials in a unit test."""
    return ModelParams(lam=1.0, kappa=1.0, alpha=1.0, horizon=100.0, dt=2e-3, seed=7)
