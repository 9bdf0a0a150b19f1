import numpy as np
import pytest

from phasegeo import core


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction (minutes)")


@pytest.fixture
def small_instance():
    """n = 8, m = 60 complex Gaussian instance with a unit-norm target."""
    x = core.random_signal(8, 11)
    ens = core.gen_gaussian_ensemble(8, 60, x, 11)
    return x, ens


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
