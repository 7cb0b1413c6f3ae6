import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(424242)


def random_simplex(rng, k, floor=0.0):
    """Dirichlet sample, optionally smoothed away from the boundary."""
    p = rng.dirichlet(np.ones(k))
    if floor:
        p = (1.0 - k * floor) * p + floor
    return p
