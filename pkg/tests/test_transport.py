import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from posterior_stability.measure_core import DiscreteMeasure, MetricSpace
from posterior_stability.transport import kantorovich_dual, w1_with_certificate, wasserstein_exact

from conftest import random_measure, random_space


def lp_oracle(mu, nu, p=1.0):
    s, t = mu.support, nu.support
    a, b = mu.weights[s], nu.weights[t]
    C = mu.space.dist[np.ix_(s, t)] ** p
    n, m = len(s), len(t)
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return res.fun ** (1 / p)


def cdf_oracle(mu, nu):
    x = mu.space.coords[:, 0]
    order = np.argsort(x)
    F = np.cumsum(np.where(mu.mask, mu.weights, 0)[order] - np.where(nu.mask, nu.weights, 0)[order])
    return math.fsum(np.abs(F[:-1]) * np.diff(x[order]))


def test_two_point_hand_value():
    sp = MetricSpace(coords=[0.0, 3.0])
    mu = DiscreteMeasure(sp, [1, 0])
    nu = DiscreteMeasure(sp, [0.25, 0.75])
    w, plan = wasserstein_exact(mu, nu)
    assert w == pytest.approx(2.25)
    assert plan.plan == pytest.approx(np.array([[0.25, 0.75], [0, 0]]))
    w2, _ = wasserstein_exact(mu, nu, 2)
    assert w2 == pytest.approx(math.sqrt(0.75 * 9))


def test_matches_lp_oracle_and_certificate(rng):
    for trial in range(60):
        n = int(rng.integers(2, 41))
        sp = random_space(rng, n, int(rng.integers(1, 4)))
        mu = random_measure(rng, sp, 0.3)
        nu = random_measure(rng, sp, 0.3)
        w, plan, cert = w1_with_certificate(mu, nu)
        assert w == pytest.approx(lp_oracle(mu, nu), abs=1e-9)
        assert abs(w - cert.objective) <= 1e-8
        assert cert.lipschitz(sp) <= 1 + 1e-10
        assert cert.potential[cert.base_index] == 0.0
        assert cert.base_index == int(np.flatnonzero(mu.mask | nu.mask)[0])
        assert np.allclose(plan.plan.sum(1), np.where(mu.mask, mu.weights, 0), atol=1e-10)
        assert np.allclose(plan.plan.sum(0), np.where(nu.mask, nu.weights, 0), atol=1e-10)
        assert plan.plan.min() >= 0


def test_wp_matches_lp_oracle(rng):
    for p in (1.5, 2.0, 3.0):
        for _ in range(10):
            sp = random_space(rng, 12)
            mu, nu = random_measure(rng, sp), random_measure(rng, sp, 0.3)
            assert wasserstein_exact(mu, nu, p)[0] == pytest.approx(lp_oracle(mu, nu, p), rel=1e-8, abs=1e-10)


def test_one_dimensional_cdf_formula(rng):
    for _ in range(50):
        n = int(rng.integers(2, 60))
        sp = MetricSpace(coords=rng.random(n) * 5)
        mu, nu = random_measure(rng, sp, 0.2), random_measure(rng, sp, 0.2)
        assert abs(wasserstein_exact(mu, nu)[0] - cdf_oracle(mu, nu)) <= 1e-10


def test_one_dimensional_via_distance_matrix_only(rng):
    # no coordinates: the general simplex path must agree with the closed form
    x = rng.random(25)
    sp_c = MetricSpace(coords=x)
    sp_d = MetricSpace(dist=np.abs(x[:, None] - x[None, :]))
    w1 = rng.random(25)
    w2 = rng.random(25)
    a = wasserstein_exact(DiscreteMeasure(sp_d, w1 / w1.sum()), DiscreteMeasure(sp_d, w2 / w2.sum()))[0]
    b = cdf_oracle(DiscreteMeasure(sp_c, w1 / w1.sum()), DiscreteMeasure(sp_c, w2 / w2.sum()))
    assert abs(a - b) <= 1e-10


def test_translation_on_grid():
    step = 0.01
    sp = MetricSpace(coords=np.arange(101) * step)
    mu = DiscreteMeasure.uniform(sp, range(0, 100))
    nu = DiscreteMeasure.uniform(sp, range(1, 101))
    assert wasserstein_exact(mu, nu)[0] == pytest.approx(step, abs=1e-14)


def test_monotone_in_p(rng):
    for _ in range(20):
        sp = random_space(rng, 10)
        mu, nu = random_measure(rng, sp), random_measure(rng, sp)
        vals = [wasserstein_exact(mu, nu, p)[0] for p in (1, 1.5, 2, 4)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_identical_measures():
    sp = MetricSpace(coords=[0, 1, 2])
    mu = DiscreteMeasure(sp, [0.2, 0.8, 0])
    w, plan, cert = w1_with_certificate(mu, mu)
    assert w == 0 and cert.objective == 0 and not cert.potential.any()
    assert plan.plan[1, 1] == 0.8


def test_degenerate_supplies_and_p_validation():
    sp = MetricSpace(coords=[0, 1, 2, 3])
    mu = DiscreteMeasure(sp, [0.5, 0.5, 0, 0])
    nu = DiscreteMeasure(sp, [0, 0.5, 0.5, 0])
    cert = kantorovich_dual(mu, nu)
    assert cert.objective == pytest.approx(1.0)
    assert np.isfinite(cert.potential).all()
    with pytest.raises(ValueError):
        wasserstein_exact(mu, nu, 0.5)
    with pytest.raises(ValueError):
        wasserstein_exact(mu, DiscreteMeasure(MetricSpace(coords=[0, 1, 2, 3]), [1, 0, 0, 0]))


weights = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=9)


@settings(max_examples=60, deadline=None)
@given(weights, weights, st.integers(0, 2 ** 32 - 1))
def test_duality_property(wa, wb, seed):
    n = min(len(wa), len(wb))
    rng = np.random.default_rng(seed)
    sp = MetricSpace(coords=rng.random((n, 2)))
    a, b = np.array(wa[:n]), np.array(wb[:n])
    mu, nu = DiscreteMeasure(sp, a / a.sum()), DiscreteMeasure(sp, b / b.sum())
    w, _, cert = w1_with_certificate(mu, nu)
    assert abs(w - cert.objective) <= 1e-8
    assert cert.lipschitz(sp) <= 1 + 1e-10
    # any other 1-Lipschitz test function gives a smaller mean difference
    g = sp.dist[0]
    assert abs(math.fsum(g * mu.weights) - math.fsum(g * nu.weights)) <= w + 1e-12
