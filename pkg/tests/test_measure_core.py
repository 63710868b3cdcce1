import math

import numpy as np
import pytest

from posterior_stability.measure_core import (DiscreteMeasure, MetricSpace, Misfit, NotDominatedError,
                                              dominated, ess_bounds, integrate, lipschitz_norm, lp_norm,
                                              pth_moment, radius, radon_nikodym, same_space, sup_norm,
                                              validate_space)

from conftest import random_measure, random_space


def line(*xs):
    return MetricSpace(coords=list(xs))


def test_validate_space_reports_each_axiom():
    d = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
    sp = MetricSpace(dist=d, check=False)
    found = validate_space(sp)
    assert [v.axiom for v in found] == ["triangle"]
    assert found[0].indices == (0, 1, 2)
    assert found[0].amount == pytest.approx(3.0)
    with pytest.raises(ValueError, match="triangle"):
        MetricSpace(dist=d)


def test_validate_space_symmetry_and_diagonal():
    d = np.array([[0.1, 1.0], [2.0, 0.0]])
    kinds = {v.axiom for v in validate_space(MetricSpace(dist=d, check=False))}
    assert kinds == {"zero diagonal", "symmetry"}
    neg = np.array([[0.0, -1.0], [-1.0, 0.0]])
    assert "non-negativity" in {v.axiom for v in validate_space(MetricSpace(dist=neg, check=False))}


def test_triangle_tolerance_is_absolute_1e12():
    d = np.array([[0.0, 1.0, 2.0 + 5e-13], [1.0, 0.0, 1.0], [2.0 + 5e-13, 1.0, 0.0]])
    assert validate_space(MetricSpace(dist=d, check=False)) == []
    d[0, 2] = d[2, 0] = 2.0 + 1e-11
    assert validate_space(MetricSpace(dist=d, check=False))


def test_coordinate_space_passes_validation(rng):
    sp = random_space(rng, 25, 3)
    assert validate_space(sp) == []
    assert sp.dist.shape == (25, 25)


def test_measure_rejects_bad_weights():
    sp = line(0, 1)
    with pytest.raises(ValueError):
        DiscreteMeasure(sp, [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure(sp, [1.5, -0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure(sp, [0.0, 0.0], is_probability=False)
    m = DiscreteMeasure(sp, [2.0, 3.0], is_probability=False)
    assert m.mass() == 5.0


def test_support_threshold():
    sp = line(0, 1, 2)
    m = DiscreteMeasure(sp, [1 - 2e-16, 1e-16, 1e-16])
    assert list(m.support) == [0]
    m = DiscreteMeasure(sp, [0.5, 0.5 - 1e-14, 1e-14], zero_tol=1e-13)
    assert list(m.support) == [0, 1]


def test_weights_are_read_only():
    m = DiscreteMeasure.uniform(line(0, 1))
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_radius_examples():
    sp = line(0, 1, 2)
    assert radius(DiscreteMeasure(sp, [1 / 3, 1 / 3, 1 / 3])) == 2.0
    assert radius(DiscreteMeasure(sp, [0, 1, 0])) == 0.0
    assert radius(DiscreteMeasure(sp, [0.5, 0.5, 0])) == 1.0


def test_radius_matches_distance_matrix(rng):
    sp = random_space(rng, 30, 1)
    mu = random_measure(rng, sp, 0.3)
    s = mu.support
    expect = max(abs(sp.coords[i, 0] - sp.coords[j, 0]) for i in s for j in s)
    assert radius(mu) == pytest.approx(expect, abs=1e-15)


def test_lipschitz_norm():
    sp = line(0, 1, 3)
    assert lipschitz_norm([0, 2, 3], sp) == 2.0
    assert lipschitz_norm([0, 2, 3], sp, [0, 2]) == 1.0
    assert lipschitz_norm([5], line(0), [0]) == 0.0
    d = np.array([[0.0, 0.0], [0.0, 0.0]])
    pseudo = MetricSpace(dist=d)
    assert lipschitz_norm([0, 1], pseudo) == math.inf
    assert lipschitz_norm([1, 1], pseudo) == 0.0


def test_lipschitz_norm_brute_force(rng):
    sp = random_space(rng, 12, 2)
    f = rng.normal(size=12)
    brute = max(abs(f[i] - f[j]) / sp.dist[i, j] for i in range(12) for j in range(12) if i != j)
    assert lipschitz_norm(f, sp) == pytest.approx(brute, rel=1e-14)


def test_ess_bounds_ignore_null_points():
    sp = line(0, 1, 2)
    mu = DiscreteMeasure(sp, [0.5, 0.5, 0])
    assert ess_bounds([3, -1, -100], mu) == (-1.0, 3.0)
    assert sup_norm([3, -1, -100], mu) == 3.0


def test_lp_norm_and_integrate():
    sp = line(0, 1, 2)
    mu = DiscreteMeasure(sp, [0.25, 0.25, 0.5])
    assert lp_norm([1, -2, 2], mu, 1) == pytest.approx(0.25 + 0.5 + 1.0)
    assert lp_norm([1, -2, 2], mu, 2) == pytest.approx(math.sqrt(0.25 + 1 + 2))
    assert integrate([1, -2, 2], mu) == pytest.approx(0.75)


def test_radon_nikodym():
    sp = line(0, 1, 2)
    mu1 = DiscreteMeasure(sp, [0.5, 0.5, 0])
    mu2 = DiscreteMeasure(sp, [0.25, 0.25, 0.5])
    r = radon_nikodym(mu1, mu2)
    assert np.allclose(r, [2, 2, 0])
    assert dominated(mu1, mu2) and not dominated(mu2, mu1)
    with pytest.raises(NotDominatedError) as exc:
        radon_nikodym(mu2, mu1)
    assert exc.value.index == 2


def test_density_reconstructs_measure(rng):
    sp = random_space(rng, 15)
    mu2 = random_measure(rng, sp)
    mu1 = random_measure(rng, sp, 0.4)
    r = radon_nikodym(mu1, mu2)
    assert np.allclose(r * mu2.weights, np.where(mu1.mask, mu1.weights, 0), atol=1e-16)


def test_pth_moment():
    sp = line(0, 1, 3)
    mu = DiscreteMeasure(sp, [0.5, 0.25, 0.25])
    assert pth_moment(mu, 1, 0) == pytest.approx(0.25 + 0.75)
    assert pth_moment(mu, 2, 0) == pytest.approx(math.sqrt(0.25 + 2.25))
    with pytest.raises(ValueError):
        pth_moment(mu, 0.5, 0)


def test_moment_not_above_radius_of_support_and_base(rng):
    for _ in range(20):
        sp = random_space(rng, 10)
        mu = random_measure(rng, sp, 0.3)
        base = int(rng.integers(10))
        idx = np.union1d(mu.support, [base])
        r = sp.dist[np.ix_(idx, idx)].max()
        for p in (1, 2, 3.5):
            assert pth_moment(mu, p, base) <= r + 1e-14
        assert radius(mu) <= sp.dist.max()


def test_same_space_is_identity_based():
    a, b = line(0, 1), line(0, 1)
    with pytest.raises(ValueError):
        same_space(DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b))


def test_misfit_must_be_finite():
    with pytest.raises(ValueError):
        Misfit([0, math.inf])
    with pytest.raises(ValueError):
        Misfit([math.nan])
    assert np.all((Misfit([1, 2]) + 1).values == [2, 3])
