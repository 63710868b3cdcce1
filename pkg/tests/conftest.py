import numpy as np
import pytest

from posterior_stability.measure_core import DiscreteMeasure, MetricSpace


def random_measure(rng, space, zero_frac=0.0):
    w = rng.random(space.n) + 0.05
    if zero_frac:
        w[rng.random(space.n) < zero_frac] = 0.0
        if not w.any():
            w[0] = 1.0
    return DiscreteMeasure(space, w / w.sum())


def random_space(rng, n, dim=2):
    return MetricSpace(coords=rng.random((n, dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
