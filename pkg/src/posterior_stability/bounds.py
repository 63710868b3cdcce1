"""Two-sided stability bounds for posteriors under misfit and prior perturbations.

Each ``*_bounds`` function returns a BoundReport: the true distance between
the two posteriors, every bound with the hypotheses it needs, and the
intermediate quantities.  A bound whose hypotheses fail is stored as
``NOT_APPLICABLE`` and never compared.

Misfits are shifted so their essential infimum is zero before the bounds
that need non-negative misfits; the posterior does not see the shift and
the shift is recorded.  Prior perturbations shift over the union of the
two supports.  Bounds that hold without any sign condition are also
evaluated on the raw misfits (suffix ``_raw``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bayes import PHI_MAX, posterior
from .divergences import abs_log_ratio_integral, hellinger, kullback_leibler, total_variation
from .measure_core import DiscreteMeasure, as_values, lipschitz_norm, pth_moment, radius, same_space
from .transport import w1_with_certificate

EQUAL_TOL = 1e-10
SLACK_TOL = 1e-9
CHECK_TOL = 1e-10
IDENTITY_TOL = 1e-8
EXP_LIMIT = 700.0


class _NotApplicable:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "NOT_APPLICABLE"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_NotApplicable, ())


NOT_APPLICABLE = _NotApplicable()


def is_na(x) -> bool:
    return x is NOT_APPLICABLE


@dataclass
class BoundReport:
    proposition: str
    hypotheses: dict[str, bool]
    actual: float
    components: dict[str, object] = field(default_factory=dict)
    lower_bounds: dict[str, object] = field(default_factory=dict)
    upper_bounds: dict[str, object] = field(default_factory=dict)
    requires: dict[str, tuple[str, ...]] = field(default_factory=dict)
    checks: dict[str, object] = field(default_factory=dict)
    identities: dict[str, object] = field(default_factory=dict)
    branches: dict[str, str] = field(default_factory=dict)

    def _live(self, d):
        return {k: v for k, v in d.items() if not is_na(v)}

    @property
    def slack_lower(self):
        live = self._live(self.lower_bounds)
        if not live or not math.isfinite(self.actual):
            return NOT_APPLICABLE
        return self.actual - max(live.values())

    @property
    def slack_upper(self):
        live = self._live(self.upper_bounds)
        if not live:
            return NOT_APPLICABLE
        return min(live.values()) - self.actual

    def slacks(self) -> dict[str, float]:
        out = {}
        for k, v in self._live(self.lower_bounds).items():
            if math.isfinite(self.actual):
                out["lower:" + k] = self.actual - v
        for k, v in self._live(self.upper_bounds).items():
            out["upper:" + k] = v - self.actual
        return out

    def violations(self, slack_tol: float = SLACK_TOL, check_tol: float = CHECK_TOL,
                   identity_tol: float = IDENTITY_TOL) -> list[str]:
        bad = [f"{k} slack {s:.3e}" for k, s in self.slacks().items() if not s >= -slack_tol]
        bad += [f"check:{k} residual {v:.3e}" for k, v in self._live(self.checks).items()
                if not v >= -check_tol]
        bad += [f"identity:{k} residual {v:.3e}" for k, v in self._live(self.identities).items()
                if not v <= identity_tol]
        return bad

    def to_dict(self) -> dict:
        def enc(v):
            if is_na(v):
                return "not-applicable"
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            if isinstance(v, (int, np.integer)):
                return int(v)
            if isinstance(v, (float, np.floating)):
                v = float(v)
                return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
            return v
        return {
            "proposition": self.proposition,
            "actual": enc(self.actual),
            "hypotheses": {k: bool(v) for k, v in self.hypotheses.items()},
            "branches": dict(self.branches),
            "lower_bounds": {k: enc(v) for k, v in self.lower_bounds.items()},
            "upper_bounds": {k: enc(v) for k, v in self.upper_bounds.items()},
            "requires": {k: list(v) for k, v in self.requires.items()},
            "slack_lower": enc(self.slack_lower),
            "slack_upper": enc(self.slack_upper),
            "checks": {k: enc(v) for k, v in self.checks.items()},
            "identities": {k: enc(v) for k, v in self.identities.items()},
            "components": {k: enc(v) for k, v in self.components.items()},
        }


class _Builder:
    def __init__(self, proposition: str, actual: float, hypotheses: dict[str, bool]):
        self.r = BoundReport(proposition, {k: bool(v) for k, v in hypotheses.items()}, float(actual))

    def ok(self, requires) -> bool:
        return all(self.r.hypotheses[h] for h in requires)

    def _put(self, table, name, requires, fn):
        self.r.requires[name] = tuple(requires)
        table[name] = float(fn()) if self.ok(requires) else NOT_APPLICABLE

    def lower(self, name: str, requires, fn: Callable[[], float]):
        self._put(self.r.lower_bounds, name, requires, fn)

    def upper(self, name: str, requires, fn: Callable[[], float]):
        self._put(self.r.upper_bounds, name, requires, fn)

    def check(self, name: str, requires, lhs: Callable[[], float], rhs: Callable[[], float]):
        """Side inequality lhs <= rhs, stored as a scaled residual."""
        if not self.ok(requires):
            self.r.checks[name] = NOT_APPLICABLE
            return
        a, b = float(lhs()), float(rhs())
        self.r.checks[name] = (b - a) / max(1.0, abs(a), abs(b))

    def identity(self, name: str, requires, fn: Callable[[], float]):
        self.r.identities[name] = abs(float(fn())) if self.ok(requires) else NOT_APPLICABLE


# -- small numerics on support arrays ---------------------------------------

def _l1(x, w) -> float:
    return math.fsum(np.abs(x) * w)


def _l2(x, w) -> float:
    return math.sqrt(math.fsum(x * x * w))


def _int(x, w) -> float:
    return math.fsum(x * w)


def _sup(x) -> float:
    return float(np.abs(x).max())


def _close(a: float, b: float, tol: float = EQUAL_TOL) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b))


def _exp_neg(v: np.ndarray, live: np.ndarray, scale: float = 1.0) -> np.ndarray:
    out = np.zeros_like(v)
    out[live] = np.exp(-scale * v[live])
    return out


def kl_inverse(a: float) -> float:
    """Smallest x >= 0 with x + sqrt(2x) >= a."""
    if a <= 0:
        return 0.0
    t = (-math.sqrt(2.0) + math.sqrt(2.0 + 4.0 * a)) / 2.0
    return t * t


def kl_gamma(kl: float) -> int:
    return 2 if kl < 2 else 1


def kl_xi(kl: float) -> float:
    return 1.0 if kl >= 2 else 0.5


def kl_exponent_inequalities(x) -> np.ndarray:
    """Residuals of x + sqrt(2x) <= 2x (x >= 2) and <= 2 sqrt(2x) (0 <= x < 2)."""
    x = np.asarray(x, dtype=float)
    lhs = x + np.sqrt(2 * x)
    rhs = np.where(x >= 2, 2 * x, 2 * np.sqrt(2 * x))
    return rhs - lhs


class _MisfitPair:
    """Shared set-up for two misfits against one prior."""

    def __init__(self, mu: DiscreteMeasure, phi1, phi2, phi_max: float):
        space = mu.space
        v1, v2 = as_values(phi1), as_values(phi2)
        for v in (v1, v2):
            if v.shape[0] != space.n:
                raise ValueError("misfit length does not match the space")
        s = mu.support
        self.mu, self.s = mu, s
        self.w = mu.weights[s]
        self.raw1, self.raw2 = v1[s], v2[s]
        self.live1, self.live2 = self.raw1 < phi_max, self.raw2 < phi_max
        self.bounded = bool(self.live1.all() and self.live2.all())
        self.shift1 = float(self.raw1[self.live1].min())
        self.shift2 = float(self.raw2[self.live2].min())
        self.n1 = np.where(self.live1, self.raw1 - self.shift1, math.inf)
        self.n2 = np.where(self.live2, self.raw2 - self.shift2, math.inf)
        self.e1, self.e2 = _exp_neg(self.n1, self.live1), _exp_neg(self.n2, self.live2)
        self.Z1, self.Z2 = _int(self.e1, self.w), _int(self.e2, self.w)
        self.p1, self.p2 = posterior(mu, v1, phi_max), posterior(mu, v2, phi_max)
        self.raw_ok = bool(self.bounded and max(-self.raw1.min(), -self.raw2.min()) < EXP_LIMIT)
        if self.raw_ok:
            self.r1, self.r2 = np.exp(-self.raw1), np.exp(-self.raw2)
            self.R1, self.R2 = _int(self.r1, self.w), _int(self.r2, self.w)
        else:
            self.R1, self.R2 = self.p1.evidence, self.p2.evidence
        self.d = self.n1 - self.n2 if self.bounded else None

    def base_hypotheses(self) -> dict[str, bool]:
        h = {
            "bounded_misfits": self.bounded,
            "essinf_zero": self.shift1 == 0.0 and self.shift2 == 0.0,
            "nonnegative": self.shift1 >= 0.0 and self.shift2 >= 0.0,
            "raw_exp_representable": self.raw_ok,
            "evidence_equal": _close(self.Z1, self.Z2),
            "evidence_equal_raw": self.raw_ok and _close(self.R1, self.R2),
        }
        if self.bounded:
            pos = bool(np.any(self.d > 0))
            neg = bool(np.any(self.d < 0))
            h["sign_change"] = pos and neg
        else:
            h["sign_change"] = False
        return h

    def base_components(self) -> dict[str, object]:
        c = {"Z1": self.Z1, "Z2": self.Z2, "Z1_raw": self.p1.evidence, "Z2_raw": self.p2.evidence,
             "shift1": self.shift1, "shift2": self.shift2,
             "likelihood_l1_gap": _l1(self.e1 - self.e2, self.w)}
        if self.bounded:
            c.update({"misfit_l1_gap": _l1(self.d, self.w), "misfit_l2_gap": _l2(self.d, self.w),
                      "sup_norm1": _sup(self.n1), "sup_norm2": _sup(self.n2)})
        return c


def _check_pair(mu, phi1, phi2, phi_max):
    if not mu.is_probability:
        raise ValueError("prior must be a probability measure")
    return _MisfitPair(mu, phi1, phi2, phi_max)


# -- total variation ---------------------------------------------------------

def tv_misfit_bounds(mu: DiscreteMeasure, phi1, phi2, phi_max: float = PHI_MAX) -> BoundReport:
    P = _check_pair(mu, phi1, phi2, phi_max)
    actual = total_variation(P.p1.posterior, P.p2.posterior)
    b = _Builder("tv_misfit", actual, P.base_hypotheses())
    b.r.components.update(P.base_components())
    w, Z1, Z2 = P.w, P.Z1, P.Z2
    eL1 = _l1(P.e1 - P.e2, w)
    dZ = abs(Z1 - Z2)
    B = ["bounded_misfits"]

    def lip_core():
        return _l1(P.d + math.log(Z1 / Z2), w)

    b.upper("lipschitz", B, lambda: 0.5 / min(Z1, Z2) * lip_core())
    b.upper("triangle", [], lambda: 0.5 * (eL1 + dZ) / max(Z1, Z2))
    b.upper("triangle_raw", ["raw_exp_representable"],
            lambda: 0.5 * (_l1(P.r1 - P.r2, w) + abs(P.R1 - P.R2)) / max(P.R1, P.R2))
    b.upper("triangle_misfit_l1", B, lambda: 0.5 * (_l1(P.d, w) + dZ) / max(Z1, Z2))
    b.upper("triangle_misfit_l1_chain", B, lambda: _l1(P.d, w) / max(Z1, Z2))

    b.lower("lipschitz", B, lambda: 0.5 * min(math.exp(-_sup(P.n1)) / Z1,
                                              math.exp(-_sup(P.n2)) / Z2) * lip_core())
    b.lower("lipschitz_raw", B + ["raw_exp_representable"],
            lambda: 0.5 * min(math.exp(-_sup(P.raw1)) / P.R1, math.exp(-_sup(P.raw2)) / P.R2)
            * _l1(P.raw1 - P.raw2 + math.log(P.R1 / P.R2), w))
    b.lower("triangle_general", [], lambda: abs(eL1 - dZ) / (2 * min(Z1, Z2)))

    def triangle_case():
        m1, m2 = math.exp(-_sup(P.n1)), math.exp(-_sup(P.n2))
        if b.r.hypotheses["evidence_equal"]:
            b.r.branches["triangle_case"] = "evidence_equal"
            return 0.5 * min(m1, m2) / min(Z1, Z2) * _l1(P.d, w)
        if Z1 > Z2:
            b.r.branches["triangle_case"] = "Z1>Z2"
            return m1 / Z2 * _l1(np.where(P.d > 0, P.d, 0.0), w)
        b.r.branches["triangle_case"] = "Z1<Z2"
        return m2 / Z1 * _l1(np.where(P.d < 0, P.d, 0.0), w)

    b.lower("triangle_case", B + ["sign_change"], triangle_case)
    b.r.hypotheses["no_sign_change"] = P.bounded and not b.r.hypotheses["sign_change"]
    b.lower("triangle_no_sign_change", ["no_sign_change"],
            lambda: (0.5 * min(math.exp(-_sup(P.n1)), math.exp(-_sup(P.n2))) / min(Z1, Z2)
                     * _l1(P.d, w)) if b.r.hypotheses["evidence_equal"] else 0.0)
    b.lower("evidence_equal_raw", B + ["evidence_equal_raw"],
            lambda: 0.5 * min(math.exp(-_sup(P.raw1)), math.exp(-_sup(P.raw2)))
            / min(P.R1, P.R2) * _l1(P.raw1 - P.raw2, w))

    b.check("evidence_gap_le_likelihood_l1", [], lambda: dZ, lambda: eL1)
    b.check("likelihood_l1_le_misfit_l1", B, lambda: eL1, lambda: _l1(P.d, w))
    return b.r


def _prior_setup(mu1: DiscreteMeasure, mu2: DiscreteMeasure, phi, phi_max: float):
    space = same_space(mu1, mu2)
    if not (mu1.is_probability and mu2.is_probability):
        raise ValueError("priors must be probability measures")
    v = as_values(phi)
    if v.shape[0] != space.n:
        raise ValueError("misfit length does not match the space")
    union = mu1.mask | mu2.mask
    s = np.flatnonzero(union)
    p1 = np.where(mu1.mask[s], mu1.weights[s], 0.0)
    p2 = np.where(mu2.mask[s], mu2.weights[s], 0.0)
    raw = v[s]
    live = raw < phi_max
    if not live.any():
        raise ValueError("misfit is infinite on the whole support")
    shift = float(raw[live].min())
    phi_n = np.where(live, raw - shift, math.inf)
    e = _exp_neg(phi_n, live)
    Z1, Z2 = _int(e, p1), _int(e, p2)
    if Z1 <= 0 or Z2 <= 0:
        raise ValueError("evidence vanishes for one of the priors")
    post1, post2 = posterior(mu1, v, phi_max), posterior(mu2, v, phi_max)
    m1, m2 = mu1.mask[s], mu2.mask[s]
    bounded = bool(live.all())
    hyp = {
        "bounded_misfits": bounded,
        "nonnegative": True,
        "essinf_zero_mu1": bool(phi_n[m1].min() == 0.0),
        "essinf_zero_mu2": bool(phi_n[m2].min() == 0.0),
        "evidence_equal": _close(Z1, Z2),
        "dominated": bool(not np.any(m1 & ~m2)),
        "equivalent": bool(np.array_equal(m1, m2)),
    }
    comp = {"Z1": Z1, "Z2": Z2, "shift": shift, "Z1_raw": post1.evidence, "Z2_raw": post2.evidence}
    return dict(space=space, s=s, p1=p1, p2=p2, phi=phi_n, raw=raw, live=live, e=e, Z1=Z1, Z2=Z2,
                post1=post1, post2=post2, m1=m1, m2=m2, bounded=bounded, hyp=hyp, comp=comp)


def tv_prior_bounds(mu1: DiscreteMeasure, mu2: DiscreteMeasure, phi,
                    phi_max: float = PHI_MAX) -> BoundReport:
    S = _prior_setup(mu1, mu2, phi, phi_max)
    actual = total_variation(S["post1"].posterior, S["post2"].posterior)
    b = _Builder("tv_prior", actual, S["hyp"])
    b.r.components.update(S["comp"])
    Z1, Z2, e, p1, p2 = S["Z1"], S["Z2"], S["e"], S["p1"], S["p2"]
    dtv = total_variation(mu1, mu2)
    dZ = abs(Z1 - Z2)
    b.r.components["prior_tv"] = dtv
    B = ["bounded_misfits"]

    def floor_all():
        return math.exp(-_sup(S["phi"]))

    b.upper("triangle", [], lambda: (dtv + dZ / 2) / max(Z1, Z2))
    b.upper("triangle_general", [], lambda: (0.5 * _l1(e * (p1 - p2), 1.0) + dZ / 2) / max(Z1, Z2))
    b.upper("triangle_chain", [], lambda: 2 * dtv / max(Z1, Z2))
    b.upper("level_set", ["evidence_equal"], lambda: dtv / Z1)
    b.lower("triangle", B, lambda: floor_all() / Z1 * abs(dtv - dZ / (2 * Z2)))
    b.lower("triangle_swapped", B, lambda: floor_all() / Z2 * abs(dtv - dZ / (2 * Z1)))
    b.lower("level_set", B + ["evidence_equal"], lambda: floor_all() / Z1 * dtv)

    # density-ratio variant: needs mu1 and mu2 mutually absolutely continuous
    b.r.hypotheses["density_ratio_bounded"] = S["hyp"]["equivalent"] and S["bounded"]
    L = ["density_ratio_bounded"]
    m1 = S["m1"]
    if b.r.hypotheses["density_ratio_bounded"]:
        r = p2[m1] / p1[m1]
        c_lo, c_hi = float(r.min()), float(r.max())
        core = _l1(math.log(Z2 / Z1) - np.log(r), p1[m1])
        sup1 = _sup(S["phi"][m1])
        b.r.components.update({"ratio_min": c_lo, "ratio_max": c_hi, "ratio_log_l1": core})
        b.r.components["lipschitz_lower_as_printed"] = (
            0.5 * math.exp(-sup1) / max(Z1, Z2) * (1.0 / c_lo) * core)
    b.upper("lipschitz", L, lambda: 0.5 / min(Z1, Z2) * c_hi * core)
    b.lower("lipschitz", L, lambda: 0.5 * math.exp(-sup1) * min(1.0 / Z1, c_lo / Z2) * core)

    b.check("evidence_gap_le_weighted_prior_l1", [], lambda: dZ, lambda: _l1(e * (p1 - p2), 1.0))
    b.check("evidence_gap_le_2tv", [], lambda: dZ, lambda: 2 * dtv)
    b.check("log_evidence_ratio", L, lambda: abs(math.log(Z2 / Z1)), lambda: 2 * dtv / min(Z1, Z2))
    return b.r


# -- Hellinger ---------------------------------------------------------------

def hellinger_misfit_bounds(mu: DiscreteMeasure, phi1, phi2, phi_max: float = PHI_MAX) -> BoundReport:
    P = _check_pair(mu, phi1, phi2, phi_max)
    actual = hellinger(P.p1.posterior, P.p2.posterior)
    b = _Builder("hellinger_misfit", actual, P.base_hypotheses())
    b.r.components.update(P.base_components())
    w, Z1, Z2 = P.w, P.Z1, P.Z2
    q1, q2 = math.sqrt(Z1), math.sqrt(Z2)
    h1, h2 = np.sqrt(P.e1), np.sqrt(P.e2)
    hL2 = _l2(h1 - h2, w)
    dq = abs(q2 - q1)
    B = ["bounded_misfits"]
    b.r.components["root_likelihood_l2_gap"] = hL2

    def lip_core():
        return _l2(P.d + math.log(Z1 / Z2), w)

    b.upper("lipschitz", B, lambda: 0.5 / min(q1, q2) * lip_core())
    b.upper("triangle", [], lambda: (hL2 + dq) / max(q1, q2))
    b.upper("triangle_raw", ["raw_exp_representable"],
            lambda: (_l2(np.sqrt(P.r1) - np.sqrt(P.r2), w) + abs(math.sqrt(P.R2) - math.sqrt(P.R1)))
            / max(math.sqrt(P.R1), math.sqrt(P.R2)))
    b.upper("triangle_chain", [], lambda: 2 * hL2 / max(q1, q2))
    b.upper("triangle_misfit", B,
            lambda: min(2 * math.sqrt(_l1(P.d, w)), _l2(P.d, w)) / max(q1, q2))
    b.upper("reference", B, lambda: _l2(P.d, w) / min(Z1, Z2))

    b.lower("lipschitz", B, lambda: 0.5 * min(math.exp(-0.5 * _sup(P.n1)) / q1,
                                              math.exp(-0.5 * _sup(P.n2)) / q2) * lip_core())
    b.lower("lipschitz_raw", B + ["raw_exp_representable"],
            lambda: 0.5 * min(math.exp(-0.5 * _sup(P.raw1)) / math.sqrt(P.R1),
                              math.exp(-0.5 * _sup(P.raw2)) / math.sqrt(P.R2))
            * _l2(P.raw1 - P.raw2 + math.log(P.R1 / P.R2), w))

    b.check("root_evidence_gap", [], lambda: dq, lambda: hL2)
    return b.r


def hellinger_prior_bounds(mu1: DiscreteMeasure, mu2: DiscreteMeasure, phi,
                           phi_max: float = PHI_MAX) -> BoundReport:
    S = _prior_setup(mu1, mu2, phi, phi_max)
    actual = hellinger(S["post1"].posterior, S["post2"].posterior)
    b = _Builder("hellinger_prior", actual, S["hyp"])
    b.r.components.update(S["comp"])
    Z1, Z2 = S["Z1"], S["Z2"]
    q1, q2 = math.sqrt(Z1), math.sqrt(Z2)
    h0 = hellinger(mu1, mu2)
    dq = abs(q2 - q1)
    b.r.components["prior_hellinger"] = h0
    B = ["bounded_misfits"]

    def floor_half():
        return math.exp(-0.5 * _sup(S["phi"]))

    b.upper("triangle", [], lambda: (h0 + dq) / max(q1, q2))
    b.upper("triangle_chain", [], lambda: 2 * h0 / max(q1, q2))
    b.upper("level_set", ["evidence_equal"], lambda: h0 / q1)
    b.upper("reference", [], lambda: 2 * h0 / min(Z1, Z2))
    b.lower("triangle", B, lambda: floor_half() / q1 * abs(h0 - dq / q2))
    b.lower("triangle_swapped", B, lambda: floor_half() / q2 * abs(h0 - dq / q1))
    b.lower("level_set", B + ["evidence_equal"], lambda: floor_half() / q1 * h0)

    b.check("root_evidence_gap_le_hellinger", [], lambda: dq, lambda: h0)
    b.check("evidence_gap_le_2hellinger", [], lambda: abs(Z1 - Z2), lambda: 2 * h0)
    return b.r


# -- Kullback-Leibler ----------------------------------------------------------

def kl_joint_bounds(mu1: DiscreteMeasure, phi1, mu2: DiscreteMeasure, phi2,
                    phi_max: float = PHI_MAX) -> BoundReport:
    space = same_space(mu1, mu2)
    if not (mu1.is_probability and mu2.is_probability):
        raise ValueError("priors must be probability measures")
    v1, v2 = as_values(phi1), as_values(phi2)
    for v in (v1, v2):
        if v.shape[0] != space.n:
            raise ValueError("misfit length does not match the space")
    s1, s2 = mu1.support, mu2.support
    w1 = mu1.weights[s1]
    bounded = bool(np.all(v1[s1] < phi_max) and np.all(v2[s2] < phi_max))
    dom = bool(not np.any(mu1.mask & ~mu2.mask))
    post1, post2 = posterior(mu1, v1, phi_max), posterior(mu2, v2, phi_max)
    actual = kullback_leibler(post1.posterior, post2.posterior)
    kl0 = kullback_leibler(mu1, mu2)
    union = np.flatnonzero(mu1.mask | mu2.mask)
    misfit_only = bool(np.array_equal(mu1.mask, mu2.mask)
                       and np.array_equal(mu1.weights[s1], mu2.weights[s2]))
    prior_only = bool(np.array_equal(v1[union], v2[union]))
    hyp = {
        "dominated": dom,
        "bounded_misfits": bounded,
        "finite_actual": math.isfinite(actual),
        "misfit_only": misfit_only,
        "prior_only": prior_only,
        "equivalent": bool(np.array_equal(mu1.mask, mu2.mask)),
    }
    b = _Builder("kl_joint", actual, hyp)
    C = b.r.components
    C.update({"prior_kl": kl0, "Z1_raw": post1.evidence, "Z2_raw": post2.evidence})
    J = ["dominated", "bounded_misfits"]
    JL = J + ["finite_actual"]
    if b.ok(J):
        sh1, sh2 = float(v1[s1].min()), float(v2[s2].min())
        n1 = v1 - sh1
        n2 = v2 - sh2
        Z1 = _int(np.exp(-n1[s1]), w1)
        Z2 = _int(np.exp(-n2[s2]), mu2.weights[s2])
        delta = n2[s1] - n1[s1]
        lz = math.log(Z2 / Z1)
        A1 = math.exp(-_sup(n1[s1])) / Z1 * abs(_int(delta, w1) + lz + kl0)
        C.update({"Z1": Z1, "Z2": Z2, "shift1": sh1, "shift2": sh2, "A1": A1,
                  "A2_as_printed": math.exp(-_sup(n1[s1])) / Z1
                  * (_l1(delta, w1) + abs(lz) + abs_log_ratio_integral(mu1, mu2)),
                  "xi": kl_xi(kl0)})
        if math.isfinite(actual):
            C["gamma"] = kl_gamma(actual)
    b.upper("joint", J, lambda: _l1(delta, w1) / Z1 + abs(lz) + (kl0 + math.sqrt(2 * kl0)) / Z1)
    b.lower("joint_inverse", JL, lambda: kl_inverse(A1))
    b.lower("joint_gamma", JL, lambda: A1 ** kl_gamma(actual) / 8)

    M = J + ["misfit_only"]
    b.upper("misfit_only", M, lambda: _l1(delta, w1) / Z1 + abs(lz))
    b.upper("misfit_only_tight", M, lambda: _l1(delta, w1) / Z1 + _l1(delta, w1) / min(Z1, Z2))
    b.upper("misfit_only_reference", M, lambda: 2 * _l1(delta, w1) / min(Z1, Z2))
    b.lower("misfit_only_gamma", M + ["finite_actual"],
            lambda: (math.exp(-_sup(n1[s1])) / Z1 * abs(_int(delta, w1) + lz)) ** kl_gamma(actual) / 8)
    if b.ok(M) and math.isfinite(actual):
        C["misfit_only_gamma_as_printed"] = (
            math.exp(-_sup(n1[s1])) / Z1 * (_l1(delta, w1) + abs(lz))) ** kl_gamma(actual) / 8
    b.check("misfit_only_tight_le_reference", M,
            lambda: _l1(delta, w1) / Z1 + _l1(delta, w1) / min(Z1, Z2),
            lambda: 2 * _l1(delta, w1) / min(Z1, Z2))

    # prior-only specialisation: one misfit shifted over the union of supports
    P = J + ["prior_only"]
    if b.ok(P):
        cs = float(v1[union].min())
        c_n = v1 - cs
        Y1 = _int(np.exp(-c_n[s1]), w1)
        Y2 = _int(np.exp(-c_n[s2]), mu2.weights[s2])
        ly = math.log(Y2 / Y1)
        C.update({"prior_only_Z1": Y1, "prior_only_Z2": Y2,
                  "prior_only_upper_as_printed": abs(ly) + 2 * math.sqrt(2) * kl0 ** kl_xi(kl0)})
    b.upper("prior_only", P, lambda: abs(ly) + 2 * math.sqrt(2) * kl0 ** kl_xi(kl0) / Y1)
    b.upper("prior_only_full", P,
            lambda: (kl0 + math.sqrt(2 * kl0)) / Y1 + math.sqrt(2 * kl0) / min(Y1, Y2))
    b.upper("prior_only_reference", P + ["equivalent"],
            lambda: (kl0 + kullback_leibler(mu2, mu1)) / min(Y1, Y2))
    b.lower("prior_only_gamma", P + ["finite_actual"],
            lambda: (math.exp(-_sup(c_n[s1])) / Y1 * abs(ly + kl0)) ** kl_gamma(actual) / 8)

    b.check("prior_abs_log_ratio", ["dominated"],
            lambda: abs_log_ratio_integral(mu1, mu2), lambda: kl0 + math.sqrt(2 * kl0))
    b.check("posterior_abs_log_ratio", ["finite_actual"],
            lambda: abs_log_ratio_integral(post1.posterior, post2.posterior),
            lambda: actual + math.sqrt(2 * actual))
    b.check("chain_A1", JL, lambda: A1, lambda: actual + math.sqrt(2 * actual))

    # evidence-ratio bound with both misfits shifted to essinf zero over mu2
    if b.ok(J):
        t1 = v1 - float(v1[s2].min())
        t2 = v2 - float(v2[s2].min())
        w2 = mu2.weights[s2]
        X1 = _int(np.exp(-t1[s1]), w1)
        X2 = _int(np.exp(-t2[s2]), w2)
        A = _int(np.exp(-t1[s2]), w2)
        Bq = _int(np.exp(-t2[s2]), w2)
        num = _l1(t1[s2] - t2[s2], w2) + math.sqrt(2 * kl0)
        C["aux_log_ratio_as_printed"] = num / min(A, Bq)
    b.check("aux_log_ratio", J, lambda: abs(math.log(X2 / X1)), lambda: num / min(A, Bq, X1))
    return b.r


# -- 1-Wasserstein -------------------------------------------------------------

def _lip_positive(lip: float, values: np.ndarray, diam: float) -> bool:
    if not math.isfinite(lip):
        return False
    scale = float(np.abs(values).max()) / diam if diam > 0 else 0.0
    return lip > EQUAL_TOL * max(scale, 1e-300)


def w1_misfit_bounds(mu: DiscreteMeasure, phi1, phi2, phi_max: float = PHI_MAX) -> BoundReport:
    P = _check_pair(mu, phi1, phi2, phi_max)
    actual, _, cert = w1_with_certificate(P.p1.posterior, P.p2.posterior)
    hyp = P.base_hypotheses()
    space = mu.space
    R = radius(mu)
    s = P.s
    b = _Builder("w1_misfit", actual, hyp)
    b.r.components.update(P.base_components())
    b.r.components["radius"] = R
    w, Z1, Z2 = P.w, P.Z1, P.Z2
    eL1 = _l1(P.e1 - P.e2, w)
    dZ = abs(Z1 - Z2)
    B = ["bounded_misfits"]

    b.upper("triangle", [], lambda: R / max(Z1, Z2) * (eL1 + dZ))
    b.upper("triangle_raw", ["raw_exp_representable"],
            lambda: R / max(P.R1, P.R2) * (_l1(P.r1 - P.r2, w) + abs(P.R1 - P.R2)))
    b.upper("misfit_l1", B, lambda: R / max(Z1, Z2) * (_l1(P.d, w) + dZ))
    b.upper("misfit_l1_chain", B, lambda: 2 * R / max(Z1, Z2) * _l1(P.d, w))

    def lip_of(g):
        full = np.zeros(space.n)
        full[s] = g
        return lipschitz_norm(full, space, s)

    for tag, key, g, Zr, m1, m2, dphi in (
            ("", "evidence_equal_raw",
             (P.r1 - P.r2) if P.raw_ok else None, P.R1,
             lambda: math.exp(-2 * _sup(P.raw1)), lambda: math.exp(-2 * _sup(P.raw2)),
             lambda: P.raw1 - P.raw2),
            ("_normalized", "evidence_equal", P.e1 - P.e2, Z1,
             lambda: math.exp(-2 * _sup(P.n1)), lambda: math.exp(-2 * _sup(P.n2)),
             lambda: P.d)):
        hname = "lipschitz_gap_positive" + tag
        if g is not None and hyp[key]:
            lg = lip_of(g)
            b.r.components["likelihood_gap_lipschitz" + tag] = lg
            b.r.hypotheses[hname] = _lip_positive(lg, g, R)
        else:
            b.r.hypotheses[hname] = False
        req = [key, hname]
        b.lower("evidence_equal" + tag, req, lambda g=g, Zr=Zr: (
            math.fsum(g * g * w) / (Zr * lip_of(g))))
        b.lower("evidence_equal_bounded" + tag, req + B, lambda g=g, Zr=Zr, m1=m1, m2=m2, dphi=dphi: (
            min(m1(), m2()) * _l2(dphi(), w) ** 2 / (Zr * lip_of(g))))

    f = cert.potential[s]
    post2w = P.p2.posterior.weights[s]
    b.identity("dual_identity", [], lambda: actual - abs(
        _int(f * (P.e1 - P.e2), w) + (Z2 - Z1) * _int(f, post2w)) / Z1)
    b.identity("duality_gap", [], lambda: actual - cert.objective)
    b.r.components["certificate_lipschitz"] = cert.lipschitz(space)
    b.check("certificate_1_lipschitz", [], lambda: b.r.components["certificate_lipschitz"],
            lambda: 1.0 + 1e-10)
    b.check("evidence_gap_le_likelihood_l1", [], lambda: dZ, lambda: eL1)
    if P.bounded:
        mom1 = pth_moment(P.p1.posterior, 1, int(s[0]))
        mom2 = pth_moment(mu, 2, int(s[0]))
        b.r.components["reference_upper"] = (mom1 * _l1(P.d, w) + mom2 * _l2(P.d, w)) / Z2
    return b.r


def w1_prior_bounds(mu1: DiscreteMeasure, mu2: DiscreteMeasure, phi,
                    phi_max: float = PHI_MAX) -> BoundReport:
    S = _prior_setup(mu1, mu2, phi, phi_max)
    space, s = S["space"], S["s"]
    actual, _, fcert = w1_with_certificate(S["post1"].posterior, S["post2"].posterior)
    w0, _, gcert = w1_with_certificate(mu1, mu2)
    b = _Builder("w1_prior", actual, S["hyp"])
    C = b.r.components
    C.update(S["comp"])
    Z1, Z2, e, p1, p2 = S["Z1"], S["Z2"], S["e"], S["p1"], S["p2"]
    dZ = abs(Z1 - Z2)
    R = float(space.dist[np.ix_(s, s)].max()) if len(s) > 1 else 0.0

    def on_union(x):
        full = np.zeros(space.n)
        full[s] = x
        return lipschitz_norm(full, space, s)

    L = on_union(e)
    f = fcert.potential[s]
    fe = f * e
    lip_fe = on_union(fe)
    C.update({"prior_w1": w0, "radius_union": R, "likelihood_lipschitz": L, "f_likelihood_lipschitz": lip_fe})
    zero = not _lip_positive(lip_fe, fe, R) if len(s) > 1 else True
    b.r.hypotheses["f_branch_zero"] = zero
    b.r.hypotheses["f_branch_positive"] = not zero
    b.r.branches["f_opt"] = "zero" if zero else "positive"
    lam = float(fe.mean())
    C["lambda"] = lam

    b.upper("zero_branch", ["f_branch_zero"], lambda: abs(lam) * L * w0 / (Z1 * Z2))
    b.upper("positive_branch", ["f_branch_positive"],
            lambda: ((1 + L * R) * w0 + dZ * R) / max(Z1, Z2))
    b.upper("positive_branch_single", ["f_branch_positive"], lambda: (1 + 2 * L * R) * w0 / max(Z1, Z2))

    g = gcert.potential[s]
    if S["bounded"]:
        ge = g * np.exp(S["phi"])
        lip_ge = on_union(ge)
        C["g_inverse_likelihood_lipschitz"] = lip_ge
        b.r.hypotheses["g_lipschitz_positive"] = _lip_positive(lip_ge, ge, R)
    else:
        b.r.hypotheses["g_lipschitz_positive"] = False
    b.lower("evidence_equal", ["bounded_misfits", "evidence_equal", "g_lipschitz_positive"],
            lambda: w0 / (Z1 * lip_ge))

    q1, q2 = S["post1"].posterior.weights[s], S["post2"].posterior.weights[s]
    b.identity("f_identity", [], lambda: actual - abs(_int(fe, p1) / Z1 - _int(fe, p2) / Z2))
    b.identity("f_zero_branch_identity", ["f_branch_zero"], lambda: actual - abs(lam) * dZ / (Z1 * Z2))
    b.identity("g_identity", ["bounded_misfits"], lambda: w0 - Z1 * abs(
        _int(ge, q1) - _int(ge, q2) + _int(g, p2) * (1 / Z2 - 1 / Z1)))
    b.identity("duality_gap_posterior", [], lambda: actual - fcert.objective)
    b.identity("duality_gap_prior", [], lambda: w0 - gcert.objective)
    b.check("evidence_gap_le_lipschitz_w1", [], lambda: dZ, lambda: L * w0)

    ours = (1 + 2 * L * R) / max(Z1, Z2)
    base = int(s[0])
    ref = (1 + L * R) / Z2 * (1 + L * pth_moment(mu1, 1, base) / Z1)
    C.update({"prefactor": ours, "reference_prefactor": ref})
    return b.r


# -- auxiliary lemmas ------------------------------------------------------------

def aux_lemma_suite(mu, phi1, phi2=None, phi_max: float = PHI_MAX) -> dict[str, object]:
    """Named residuals (>= 0 up to rounding) for the helper lemmas.

    Misfit mode: ``mu`` a measure and two misfits.  Prior mode: ``mu`` a
    pair of measures and a single misfit ``phi1``.
    """
    out: dict[str, object] = {}

    def res(name, lhs, rhs):
        out[name] = (rhs - lhs) / max(1.0, abs(lhs), abs(rhs))

    def eq(name, a, b):
        out[name] = -abs(a - b) / max(1.0, abs(a), abs(b))

    if isinstance(mu, (tuple, list)):
        mu1, mu2 = mu
        S = _prior_setup(mu1, mu2, phi1, phi_max)
        e, p1, p2, Z1, Z2 = S["e"], S["p1"], S["p2"], S["Z1"], S["Z2"]
        res("prior_l1_gap_nonnegative", abs(Z1 - Z2), _l1(e * (p1 - p2), 1.0))
        _tv_decomposition(out, p1, p2, eq)
        q1 = S["post1"].posterior.weights[S["s"]]
        q2 = S["post2"].posterior.weights[S["s"]]
        _tv_decomposition(out, q1, q2, eq, prefix="posterior_")
        if S["hyp"]["dominated"]:
            v = as_values(phi1)
            lo1, hi1 = float(v[mu1.support].min()), float(v[mu1.support].max())
            lo2, hi2 = float(v[mu2.support].min()), float(v[mu2.support].max())
            res("essinf_monotone", lo2, lo1)
            res("esssup_monotone", hi1, hi2)
        else:
            out["essinf_monotone"] = NOT_APPLICABLE
            out["esssup_monotone"] = NOT_APPLICABLE
        if S["bounded"]:
            _lipschitz_sandwich(out, S["space"], S["s"], S["raw"], "", res)
        return out

    if phi2 is None:
        raise ValueError("misfit mode needs two misfits")
    P = _check_pair(mu, phi1, phi2, phi_max)
    w = P.w
    if not P.bounded:
        for k in ("root_likelihood_p1", "root_likelihood_p2", "l1_gap_nonnegative",
                  "l1_gap_case_split", "l1_gap_sign_change"):
            out[k] = NOT_APPLICABLE
    else:
        l1, l2 = P.p1.likelihood[P.s], P.p2.likelihood[P.s]
        logs = np.abs(np.log(l1) - np.log(l2))
        for p in (1, 2):
            lo = min(math.exp(-P.raw1.max() / p) / P.p1.evidence ** (1 / p),
                     math.exp(-P.raw2.max() / p) / P.p2.evidence ** (1 / p)) if P.raw_ok else None
            hi = max(math.exp(-P.raw1.min() / p) / P.p1.evidence ** (1 / p),
                     math.exp(-P.raw2.min() / p) / P.p2.evidence ** (1 / p)) if P.raw_ok else None
            if lo is None:
                # the sandwich is shift invariant: use the normalised misfits
                lo = min(math.exp(-P.n1.max() / p) / P.Z1 ** (1 / p), math.exp(-P.n2.max() / p) / P.Z2 ** (1 / p))
                hi = max(1 / P.Z1 ** (1 / p), 1 / P.Z2 ** (1 / p))
            mid = np.abs(l1 ** (1 / p) - l2 ** (1 / p))
            scale = np.maximum(1.0, np.maximum(mid, hi * logs / p))
            out[f"root_likelihood_p{p}"] = float(min(((mid - lo * logs / p) / scale).min(),
                                                     ((hi * logs / p - mid) / scale).min()))
        # these lemmas are not shift invariant: use the raw misfits when possible
        if P.raw_ok:
            e1, e2, Z1, Z2, d = P.r1, P.r2, P.R1, P.R2, P.raw1 - P.raw2
        else:
            e1, e2, Z1, Z2, d = P.e1, P.e2, P.Z1, P.Z2, P.d
        gap = _l1(e1 - e2, w) - abs(Z1 - Z2)
        res("l1_gap_nonnegative", 0.0, gap)
        diff = np.abs(e1 - e2)
        if Z1 > Z2:
            part = math.fsum(diff[d > 0] * w[d > 0])
        else:
            part = math.fsum(diff[d < 0] * w[d < 0])
        eq("l1_gap_case_split", gap / 2, part)
        # no sign change forces the gap to vanish
        sign_change = bool(np.any(d > 0) and np.any(d < 0))
        out["l1_gap_sign_change"] = gap if sign_change else -abs(gap)
        _lipschitz_sandwich(out, mu.space, P.s, P.raw1, "1", res)
        _lipschitz_sandwich(out, mu.space, P.s, P.raw2, "2", res)
        lo1, hi1 = P.raw1.min(), P.raw1.max()
        lo2, hi2 = P.raw2.min(), P.raw2.max()
        tot = P.raw1 + P.raw2
        res("esssup_subadditive", float(tot.max()), float(hi1 + hi2))
        res("essinf_superadditive", float(lo1 + lo2), float(tot.min()))
    q1 = P.p1.posterior.weights[P.s]
    q2 = P.p2.posterior.weights[P.s]
    _tv_decomposition(out, q1, q2, eq, prefix="posterior_")
    return out


def _tv_decomposition(out, p, q, eq, prefix=""):
    tv = 0.5 * math.fsum(np.abs(p - q))
    up = p > q
    eq(prefix + "tv_half_sum_plus", tv, math.fsum((p - q)[up]))
    eq(prefix + "tv_half_sum_minus", tv, math.fsum((q - p)[q > p]))


def _lipschitz_sandwich(out, space, s, raw, tag, res):
    if raw.min() < -EXP_LIMIT or raw.max() > EXP_LIMIT:
        out["lipschitz_sandwich_lower" + tag] = NOT_APPLICABLE
        out["lipschitz_sandwich_upper" + tag] = NOT_APPLICABLE
        return
    full = np.zeros(space.n)
    full[s] = raw
    lip_phi = lipschitz_norm(full, space, s)
    full[s] = np.exp(-raw)
    lip_e = lipschitz_norm(full, space, s)
    res("lipschitz_sandwich_lower" + tag, math.exp(raw.min()) * lip_e, lip_phi)
    res("lipschitz_sandwich_upper" + tag, lip_phi, lip_e * math.exp(raw.max()))


PROPOSITIONS = (
    "tv_misfit", "tv_prior", "hellinger_misfit", "hellinger_prior",
    "kl_joint", "w1_misfit", "w1_prior",
)
