import math

import mpmath as mp
import numpy as np
import pytest

from posterior_stability.divergences import (abs_log_ratio_integral, hellinger, kullback_leibler,
                                             scalar_envelopes, total_variation)
from posterior_stability.measure_core import DiscreteMeasure, MetricSpace

from conftest import random_measure, random_space


def test_known_values():
    sp = MetricSpace(coords=[0, 1])
    p = DiscreteMeasure(sp, [0.5, 0.5])
    q = DiscreteMeasure(sp, [2 / 3, 1 / 3])
    assert total_variation(p, q) == pytest.approx(1 / 6)
    assert kullback_leibler(p, q) == pytest.approx(0.5 * math.log(9 / 8))
    h = math.sqrt((math.sqrt(0.5) - math.sqrt(2 / 3)) ** 2 + (math.sqrt(0.5) - math.sqrt(1 / 3)) ** 2)
    assert hellinger(p, q) == pytest.approx(h)


def test_singular_measures():
    sp = MetricSpace(coords=[0, 1])
    a = DiscreteMeasure(sp, [1, 0])
    b = DiscreteMeasure(sp, [0, 1])
    assert total_variation(a, b) == 1.0
    assert hellinger(a, b) == pytest.approx(math.sqrt(2))
    assert kullback_leibler(a, b) == math.inf
    assert abs_log_ratio_integral(a, b) == math.inf


def test_against_high_precision(rng):
    mp.mp.dps = 30
    for _ in range(30):
        sp = random_space(rng, 12)
        p = random_measure(rng, sp)
        q = random_measure(rng, sp)
        pw, qw = [mp.mpf(x) for x in p.weights], [mp.mpf(x) for x in q.weights]
        assert total_variation(p, q) == pytest.approx(float(mp.fsum(abs(a - b) for a, b in zip(pw, qw)) / 2), abs=1e-15)
        hel = mp.sqrt(mp.fsum((mp.sqrt(a) - mp.sqrt(b)) ** 2 for a, b in zip(pw, qw)))
        assert hellinger(p, q) == pytest.approx(float(hel), abs=1e-14)
        kl = mp.fsum(a * mp.log(a / b) for a, b in zip(pw, qw))
        assert kullback_leibler(p, q) == pytest.approx(float(kl), abs=1e-14)


def test_ordering_between_divergences(rng):
    for _ in range(50):
        sp = random_space(rng, 8)
        p, q = random_measure(rng, sp, 0.2), random_measure(rng, sp)
        tv, h, kl = total_variation(p, q), hellinger(p, q), kullback_leibler(p, q)
        assert 0 <= tv <= 1 and 0 <= h <= math.sqrt(2)
        # Hellinger squared (paper convention, no 1/2) sits between TV quantities
        assert h * h / 2 <= tv + 1e-15
        assert tv <= h + 1e-15
        if math.isfinite(kl):
            assert tv <= math.sqrt(kl / 2) + 1e-15


def test_cross_space_is_error():
    a = DiscreteMeasure.uniform(MetricSpace(coords=[0, 1]))
    b = DiscreteMeasure.uniform(MetricSpace(coords=[0, 1]))
    for f in (total_variation, hellinger, kullback_leibler):
        with pytest.raises(ValueError):
            f(a, b)


def test_envelopes_scalar_and_equality():
    env = scalar_envelopes(1.0, 2.0, "log")
    assert env.lower == 0.5 and env.upper == 1.0 and env.actual == pytest.approx(math.log(2))
    env = scalar_envelopes(3.0, 3.0, "log")
    assert env.lower == env.actual == env.upper == 0.0
    env = scalar_envelopes(0.0, 1.0, "exp")
    assert env.lower == 1.0 and env.upper == pytest.approx(math.e)
    with pytest.raises(ValueError):
        scalar_envelopes(-1.0, 1.0, "log")
    with pytest.raises(ValueError):
        scalar_envelopes(1.0, 1.0, "sqrt")


def test_envelopes_vectorised(rng):
    s, t = rng.random(1000) * 10 + 1e-3, rng.random(1000) * 10 + 1e-3
    env = scalar_envelopes(s, t, "log")
    assert np.all(env.lower <= env.actual * (1 + 1e-14)) and np.all(env.actual <= env.upper * (1 + 1e-14))
