"""Grids, the worked noninjectivity and translation examples, continuity traces.

Every builder returns a Certificate: a list of (label, expected, computed,
tolerance) entries that can be re-checked and printed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bounds
from .bayes import PHI_MAX, log_evidence, posterior
from .divergences import kullback_leibler, total_variation
from .measure_core import (DiscreteMeasure, MetricSpace, Misfit, NotDominatedError, as_values,
                           lp_norm, radon_nikodym)
from .transport import wasserstein_exact

ALIGN_TOL = 1e-9
MAX_REFINE = 64
DEFAULT_N = 3000


@dataclass(frozen=True)
class CertificateEntry:
    label: str
    expected: float | None
    computed: float
    tol: float
    relation: str = "=="

    @property
    def passed(self) -> bool:
        if self.relation == "==":
            return abs(self.computed - self.expected) <= self.tol
        if self.relation == "<=":
            return self.computed <= self.expected + self.tol
        if self.relation == "holds":
            return bool(self.computed)
        raise ValueError(f"unknown relation {self.relation!r}")

    def line(self) -> str:
        mark = "ok  " if self.passed else "FAIL"
        if self.relation == "holds":
            return f"{mark} {self.label}: {bool(self.computed)}"
        rel = "=" if self.relation == "==" else "<="
        return (f"{mark} {self.label}: computed {self.computed:.16g} {rel} {self.expected:.16g}"
                f" (tol {self.tol:g})")


@dataclass
class Certificate:
    name: str
    entries: list[CertificateEntry] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def equal(self, label, expected, computed, tol):
        self.entries.append(CertificateEntry(label, float(expected), float(computed), tol, "=="))

    def at_most(self, label, bound, computed, tol=0.0):
        self.entries.append(CertificateEntry(label, float(bound), float(computed), tol, "<="))

    def holds(self, label, flag):
        self.entries.append(CertificateEntry(label, None, bool(flag), 0.0, "holds"))

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[CertificateEntry]:
        return [e for e in self.entries if not e.passed]

    def lines(self) -> list[str]:
        return [e.line() for e in self.entries]

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "entries": [{"label": e.label, "expected": e.expected,
                             "computed": e.computed if e.relation != "holds" else bool(e.computed),
                             "tol": e.tol, "relation": e.relation, "passed": e.passed}
                            for e in self.entries]}


# -- grids -------------------------------------------------------------------------

def _aligned(frac: float, m: int) -> bool:
    x = frac * m
    return abs(x - round(x)) <= ALIGN_TOL * max(1.0, x)


def discretize_interval_uniform(a: float, b: float, n: int, align: Sequence[float] = ()):
    """Midpoint grid of n (or more) equal cells on [a, b] with uniform weights.

    The cell count is raised to the first value at which every ``align``
    point lands on a cell boundary.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ValueError(f"invalid interval [{a}, {b}]")
    if n < 1:
        raise ValueError("need at least one cell")
    fracs = []
    for t in align:
        if not a <= t <= b:
            raise ValueError(f"breakpoint {t} outside [{a}, {b}]")
        fracs.append((t - a) / (b - a))
    for m in range(n, MAX_REFINE * n + 1):
        if all(_aligned(f, m) for f in fracs):
            break
    else:
        raise ValueError(f"no grid of {n}..{MAX_REFINE * n} cells aligns with {list(align)}")
    k = np.arange(m)
    x = a + (b - a) * (2 * k + 1) / (2 * m)
    space = MetricSpace(coords=x)
    return space, DiscreteMeasure(space, np.full(m, 1.0 / m))


def _uniform_on(space: MetricSpace, lo: float, hi: float) -> DiscreteMeasure:
    x = space.coords[:, 0]
    idx = np.flatnonzero((x > lo) & (x < hi))
    return DiscreteMeasure.uniform(space, idx)


def _three_interval_grid(n: int):
    # n cells per unit-length-3 interval; union grid [-2, 2] with 4n/3 cells
    if n < 3:
        raise ValueError("grid size must be at least 3")
    n = n + (-n) % 3
    space, _ = discretize_interval_uniform(-2.0, 2.0, 4 * n // 3, align=(-1.0, 1.0))
    return space, _uniform_on(space, -2.0, 1.0), _uniform_on(space, -1.0, 2.0), n


# -- noninjectivity examples -----------------------------------------------------------

def counterexample_misfit_sequence(mu: DiscreteMeasure, phi1, M: float, sets, p: float = 1.0):
    """Misfits Phi_k = Phi1 + M 1_{S_k}; returns (misfits, trace rows).

    The misfit gap stays at least M mu(S_1)^{1/p} while the log-likelihood
    gap falls to zero once S_k covers the support.
    """
    if not (math.isfinite(M) and M >= 0):
        raise ValueError("M must be a finite non-negative number")
    v1 = as_values(phi1)
    masks = []
    for S in sets:
        m = np.zeros(mu.space.n, dtype=bool)
        m[np.asarray(list(S), dtype=int)] = True
        masks.append(m)
    if not masks:
        raise ValueError("need at least one set")
    for prev, nxt in zip(masks, masks[1:]):
        if np.any(prev & ~nxt):
            raise ValueError("sets are not nested")
    if math.fsum(mu.weights[masks[0]]) <= 0:
        raise ValueError("first set has zero prior mass")
    if np.any(mu.mask & ~masks[-1]):
        raise ValueError("last set must cover the support")
    lz1 = log_evidence(mu, v1)
    floor = M * math.fsum(mu.weights[masks[0]]) ** (1.0 / p)
    misfits, rows = [], []
    for k, m in enumerate(masks, 1):
        vk = v1 + M * m
        misfits.append(Misfit(vk))
        lzk = log_evidence(mu, vk)
        # log l_1 - log l_k = (Phi_k - Phi_1) + log Z_k - log Z_1
        gap = M * m + (lzk - lz1)
        rows.append({"k": k, "mass": math.fsum(mu.weights[m]),
                     "misfit_gap": lp_norm(M * m, mu, p), "loglik_gap": lp_norm(gap, mu, p),
                     "misfit_gap_floor": floor})
    return misfits, rows


def example_misfit_sequence(n: int = 100, M: float = 2.0) -> Certificate:
    space, mu = discretize_interval_uniform(0.0, 1.0, n)
    phi1 = np.zeros(space.n)
    sets = [range(k) for k in range(1, space.n + 1)]
    _, rows = counterexample_misfit_sequence(mu, phi1, M, sets)
    cert = Certificate("misfit-sequence", data={"trace": rows})
    last = rows[-1]
    cert.at_most("final log-likelihood L1 gap", 0.0, last["loglik_gap"], 1e-12)
    cert.equal("final misfit L1 gap", M, last["misfit_gap"], 1e-12)
    cert.holds("misfit gap never below M mu(S_1)",
               all(r["misfit_gap"] >= r["misfit_gap_floor"] - 1e-12 for r in rows))
    cert.holds("log-likelihood gap ends below its start", last["loglik_gap"] < rows[0]["loglik_gap"])
    return cert


def example_prior_evidence(n: int = DEFAULT_N) -> Certificate:
    space, mu1, mu2, n = _three_interval_grid(n)
    x = space.coords[:, 0]
    phi = np.where((x < -1) | (x > 1), 1.0, 0.0)
    z_exact = (math.exp(-1) + 2) / 3
    p1, p2 = posterior(mu1, phi), posterior(mu2, phi)
    cert = Certificate("prior-evidence", data={"n": n, "space": space, "mu1": mu1, "mu2": mu2,
                                               "phi": phi})
    cert.equal("Z1", z_exact, p1.evidence, 1e-12)
    cert.equal("Z2", z_exact, p2.evidence, 1e-12)
    cert.at_most("|Z1 - Z2|", 0.0, abs(p1.evidence - p2.evidence), 1e-12)
    cert.equal("prior TV", 1 / 3, total_variation(mu1, mu2), 1e-9)
    return cert


def example_prior_posterior(n: int = DEFAULT_N) -> Certificate:
    space, mu1, mu2, n = _three_interval_grid(n)
    x = space.coords[:, 0]
    # exp(-Phi) is the indicator of [-1, 1]: capped misfit outside
    phi = np.where((x < -1) | (x > 1), PHI_MAX, 0.0)
    p1, p2 = posterior(mu1, phi), posterior(mu2, phi)
    rep = bounds.tv_prior_bounds(mu1, mu2, phi)
    cert = Certificate("prior-posterior", data={"n": n, "space": space, "mu1": mu1, "mu2": mu2,
                                                "phi": phi, "report": rep})
    cert.equal("Z1", 2 / 3, p1.evidence, 1e-12)
    cert.equal("Z2", 2 / 3, p2.evidence, 1e-12)
    cert.at_most("posterior TV", 0.0, total_variation(p1.posterior, p2.posterior), 1e-12)
    cert.equal("prior TV", 1 / 3, total_variation(mu1, mu2), 1e-9)
    cert.holds("prior bound report has no violation", not rep.violations())
    return cert


def example_translated_uniform(tau: float = 0.25, n: int = DEFAULT_N) -> Certificate:
    if not (math.isfinite(tau) and abs(tau) < 1):
        raise ValueError("tau must lie in (-1, 1)")
    lo, hi = min(0.0, tau), max(1.0, 1.0 + tau)
    cells = math.ceil(n * (hi - lo) - ALIGN_TOL)
    align = sorted({0.0, 1.0, tau, 1.0 + tau})
    space, _ = discretize_interval_uniform(lo, hi, cells, align=align)
    mu = _uniform_on(space, 0.0, 1.0)
    mu_t = _uniform_on(space, tau, 1.0 + tau)
    cert = Certificate("translated-uniform", data={"tau": tau, "space": space, "mu": mu, "mu_tau": mu_t})
    cert.equal("TV", abs(tau), total_variation(mu, mu_t), 1e-9)
    cert.equal("cells per measure agree", len(mu.support), len(mu_t.support), 0)
    if tau != 0:
        for label, a, b in (("mu << mu_tau fails", mu, mu_t), ("mu_tau << mu fails", mu_t, mu)):
            try:
                radon_nikodym(a, b)
                ok = False
            except NotDominatedError:
                ok = True
            cert.holds(label, ok)
        cert.holds("KL is infinite", math.isinf(kullback_leibler(mu, mu_t)))
    return cert


# -- continuity experiments -----------------------------------------------------------

@dataclass
class ContinuityTrace:
    kind: str
    rows: list[dict]
    tracked: tuple[str, ...]
    contraction: float
    observations: dict = field(default_factory=dict)

    def ratios(self) -> dict[str, float]:
        first, last = self.rows[0], self.rows[-1]
        return {k: (last[k] / first[k] if first[k] > 0 else 0.0) for k in self.tracked}

    @property
    def passed(self) -> bool:
        # the prior mixture gaps scale exactly like 1/n, so allow rounding on the ratio
        return all(r <= (1.0 + 1e-9) / self.contraction for r in self.ratios().values())


def _wp(mu, nu, p):
    return wasserstein_exact(mu, nu, p)[0]


def continuity_experiment(kind: str, schedule: Sequence[int] = (1, 10, 100, 1000), p: float = 1.0,
                          grid: int = 200, contraction: float | None = None,
                          scale: float = 1.0) -> ContinuityTrace:
    """Gaps along a perturbation sequence indexed by ``schedule``.

    ``scale`` multiplies the misfit perturbation (0 gives the constant
    sequence) or, for the prior case, the mixing weight of the alternative.
    """
    sched = [int(k) for k in schedule]
    if not 0 <= scale <= 1:
        raise ValueError("scale must lie in [0, 1]")
    if len(sched) < 2 or any(k < 1 for k in sched) or sorted(sched) != sched:
        raise ValueError("schedule must be an increasing sequence of positive integers")
    space, mu = discretize_interval_uniform(0.0, 1.0, grid)
    x = space.coords[:, 0]
    x0 = x[grid // 3]
    psi = scale * (3.0 * np.abs(x - x0) + np.sin(4.0 * (x - x0)) ** 2)
    rows = []
    if kind == "misfit-forward":
        phi = 4.0 * (x - x0) ** 2
        base = posterior(mu, phi)
        for k in sched:
            pk = posterior(mu, phi + psi / k)
            rows.append({"n": k, "Z_gap": abs(pk.evidence - base.evidence),
                         "Wp_gap": _wp(pk.posterior, base.posterior, p)})
        return ContinuityTrace(kind, rows, ("Z_gap", "Wp_gap"), contraction or 100.0)
    if kind == "posterior-to-misfit":
        phi = 1.0 + 4.0 * (x - x0) ** 2
        base = posterior(mu, phi)
        for k in sched:
            raw = phi + psi / k
            # shift to the evidence level set of phi; the shift keeps raw >= 0
            c = log_evidence(mu, raw) - base.log_evidence
            vk = raw + c
            if vk.min() < 0:
                raise ValueError("evidence matching made the misfit negative")
            pk = posterior(mu, vk)
            rows.append({"n": k, "Z_gap": abs(pk.evidence - base.evidence),
                         "likelihood_L2_gap": lp_norm(pk.likelihood - base.likelihood, mu, 2),
                         "misfit_L2_gap": lp_norm(vk - phi, mu, 2),
                         "Wp_gap": _wp(pk.posterior, base.posterior, p)})
        tracked = ("likelihood_L2_gap", "misfit_L2_gap", "Wp_gap")
        tr = ContinuityTrace(kind, rows, tracked, contraction or 100.0)
        mono = all(b[t] <= a[t] for t in tracked for a, b in zip(rows, rows[1:]))
        # stronger than the subsequence statement
        tr.observations["converged_without_subsequence"] = bool(mono and tr.passed)
        return tr
    if kind == "posterior-to-prior":
        phi = 4.0 * (x - x0) ** 2
        w_alt = x ** 4
        alt = DiscreteMeasure(space, w_alt / math.fsum(w_alt))
        base = posterior(mu, phi)
        for k in sched:
            t = scale / k
            mk = DiscreteMeasure(space, (1 - t) * mu.weights + t * alt.weights)
            pk = posterior(mk, phi)
            rows.append({"n": k, "Z_gap": abs(pk.evidence - base.evidence),
                         "prior_Wp_gap": _wp(mk, mu, p),
                         "Wp_gap": _wp(pk.posterior, base.posterior, p)})
        tr = ContinuityTrace(kind, rows, ("Z_gap", "prior_Wp_gap", "Wp_gap"), contraction or 1000.0)
        tr.observations["alternative_evidence_below_base"] = posterior(alt, phi).evidence < base.evidence
        return tr
    raise ValueError(f"unknown continuity experiment {kind!r}")


def _continuity_cert(name: str, kind: str, **kw) -> Certificate:
    tr = continuity_experiment(kind, **kw)
    cert = Certificate(name, data={"trace": tr.rows, "observations": tr.observations})
    for k, r in tr.ratios().items():
        cert.at_most(f"{k} final/first", 1.0 / tr.contraction, r, 1e-9 / tr.contraction)
    for k, v in tr.observations.items():
        cert.data[k] = v
    return cert


EXAMPLES = {
    "misfit-sequence": lambda **kw: example_misfit_sequence(),
    "prior-evidence": lambda n=DEFAULT_N, **kw: example_prior_evidence(n),
    "prior-posterior": lambda n=DEFAULT_N, **kw: example_prior_posterior(n),
    "translated-uniform": lambda n=DEFAULT_N, tau=0.25, **kw: example_translated_uniform(tau, n),
    "continuity-misfit": lambda **kw: _continuity_cert("continuity-misfit", "misfit-forward"),
    "continuity-posterior-misfit": lambda **kw: _continuity_cert("continuity-posterior-misfit",
                                                                 "posterior-to-misfit"),
    "continuity-posterior-prior": lambda **kw: _continuity_cert("continuity-posterior-prior",
                                                                "posterior-to-prior"),
}
