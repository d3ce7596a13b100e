import warnings

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_numerics():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def ou_pairs(n, seed, theta=1.0, sigma=0.7, lag=1.0):
    """Exact stationary OU transition pairs at time lag ``lag``."""
    r = np.random.default_rng(seed)
    var = sigma**2 / (2 * theta)
    a = np.exp(-theta * lag)
    x = r.normal(0.0, np.sqrt(var), n)
    y = a * x + r.normal(0.0, np.sqrt(var * (1 - a * a)), n)
    return x, y
