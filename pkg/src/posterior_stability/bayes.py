"""Evidence, normalised likelihood and posterior of a misfit against a prior.

Misfit entries at or above ``phi_max`` stand for +inf: their likelihood is
exactly zero.  Sums are taken after shifting the misfit by its essential
infimum (the log-sum-exp max shift), so the exponentials never underflow
on the points that carry the mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure_core import DiscreteMeasure, Misfit, as_values

PHI_MAX = 745.0
SHIFT_TOL = 1e-12


@dataclass(frozen=True)
class PosteriorResult:
    evidence: float
    log_evidence: float
    likelihood: np.ndarray
    posterior: DiscreteMeasure


def _check(mu: DiscreteMeasure, phi) -> np.ndarray:
    v = as_values(phi)
    if v.shape[0] != mu.space.n:
        raise ValueError(f"misfit has {v.shape[0]} entries, space has {mu.space.n}")
    if not np.all(np.isfinite(v)):
        raise ValueError("misfit values must be finite")
    return v


def finite_mask(phi, phi_max: float = PHI_MAX) -> np.ndarray:
    return as_values(phi) < phi_max


def is_bounded(mu: DiscreteMeasure, phi, phi_max: float = PHI_MAX) -> bool:
    """True when no support point carries a capped (infinite) misfit."""
    return bool(np.all(finite_mask(phi, phi_max)[mu.support]))


def _shift(mu: DiscreteMeasure, v: np.ndarray, phi_max: float) -> tuple[float, np.ndarray]:
    live = mu.mask & (v < phi_max)
    if not live.any():
        raise ValueError("evidence vanishes: every support point has an infinite misfit")
    return float(v[live].min()), live


def _scaled_sum(mu: DiscreteMeasure, v: np.ndarray, phi_max: float):
    m, live = _shift(mu, v, phi_max)
    e = np.zeros_like(v)
    e[live] = np.exp(-(v[live] - m))
    return m, e, math.fsum(e[live] * mu.weights[live])


def evidence(mu: DiscreteMeasure, phi, phi_max: float = PHI_MAX) -> float:
    """Z = sum_i exp(-phi_i) w_i."""
    v = _check(mu, phi)
    m, _, s = _scaled_sum(mu, v, phi_max)
    return s if m == 0.0 else s * math.exp(-m)


def log_evidence(mu: DiscreteMeasure, phi, phi_max: float = PHI_MAX) -> float:
    v = _check(mu, phi)
    m, _, s = _scaled_sum(mu, v, phi_max)
    return math.log(s) - m


def posterior(mu: DiscreteMeasure, phi, phi_max: float = PHI_MAX) -> PosteriorResult:
    v = _check(mu, phi)
    m, e, s = _scaled_sum(mu, v, phi_max)
    lik = e / s
    w = np.where(mu.mask, lik * mu.weights, 0.0)
    # renormalise the rounding dust so the posterior sums to one
    w = w / math.fsum(w)
    z = s if m == 0.0 else s * math.exp(-m)
    lik.setflags(write=False)
    return PosteriorResult(z, math.log(s) - m, lik, DiscreteMeasure(mu.space, w, zero_tol=mu.zero_tol))


def normalize_misfit(mu: DiscreteMeasure, phi, phi_max: float = PHI_MAX) -> Misfit:
    """Shift so that essinf over supp mu is 0; capped entries stay capped."""
    v = _check(mu, phi)
    m, _ = _shift(mu, v, phi_max)
    if m == 0.0:
        return phi if isinstance(phi, Misfit) else Misfit(v)
    out = np.where(v < phi_max, v - m, np.maximum(v, phi_max))
    return Misfit(out)


@dataclass(frozen=True)
class ShiftCheck:
    residual: float
    ok: bool


def evidence_shift_check(mu: DiscreteMeasure, phi, c: float, phi_max: float = PHI_MAX,
                         tol: float = SHIFT_TOL) -> ShiftCheck:
    """Residual of Z_{phi+c} = exp(-c) Z_phi, relative to exp(-c) Z_phi."""
    if not math.isfinite(c):
        raise ValueError("shift must be finite")
    v = _check(mu, phi)
    lz = log_evidence(mu, v, phi_max)
    # the cap moves with the shift so infinite entries stay infinite
    lzc = log_evidence(mu, v + c, phi_max + c)
    r = abs(math.expm1(lzc + c - lz))
    return ShiftCheck(r, r <= tol)
