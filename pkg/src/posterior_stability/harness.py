"""Seeded instances, the sandwich verification sweep, evidence sensitivity, reproduction.

Random numbers come from ``numpy.random.Philox`` keyed by the seed and are
consumed only as doubles in [0, 1) via ``Generator.random``, in this order:
point coordinates (size*dim, row major), prior 1 draws (size), prior 1
sparsity draws (size), prior 2 draws, prior 2 sparsity draws, misfit 1
(size), misfit 2 (size).
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import bounds as B
from .bayes import log_evidence, posterior
from .constructions import EXAMPLES, Certificate
from .measure_core import DiscreteMeasure, MetricSpace, Misfit, as_values

SENSITIVITY_COLUMNS = ("beta", "Z1", "Z2", "metric", "actual", "best_lower", "best_upper", "applicable")
METRICS = ("tv", "hellinger", "kl", "w1")
PERTURBATIONS = ("misfit", "prior", "joint")


class InputError(ValueError):
    """Bad configuration or problem file; maps to exit status 2."""


@dataclass(frozen=True)
class InstanceConfig:
    misfit_cap: float = 5.0
    dim: int = 2
    concentration: float = 0.5
    sparsify: float = 0.25

    def validate(self) -> None:
        if not (math.isfinite(self.misfit_cap) and self.misfit_cap >= 0):
            raise InputError("misfit_cap must be finite and non-negative")
        if self.dim < 1:
            raise InputError("dim must be at least 1")
        if not self.concentration >= 0:
            raise InputError("concentration must be non-negative")
        if not 0 <= self.sparsify < 1:
            raise InputError("sparsify must lie in [0, 1)")


@dataclass
class ProblemInstance:
    space: MetricSpace
    prior1: DiscreteMeasure
    prior2: DiscreteMeasure | None
    misfit1: Misfit
    misfit2: Misfit | None
    seed: int | None = None
    meta: dict = field(default_factory=dict)


def _draw_prior(rng, size, cfg: InstanceConfig, space) -> DiscreteMeasure:
    w = -np.log1p(-rng.random(size)) + cfg.concentration
    drop = rng.random(size) < cfg.sparsify
    if cfg.concentration == math.inf:
        w = np.ones(size)
    keep = int(np.argmax(w))
    drop[keep] = False
    w = np.where(drop, 0.0, w)
    return DiscreteMeasure(space, w / math.fsum(w))


def generate_instance(seed: int, size: int, config: InstanceConfig | None = None) -> ProblemInstance:
    cfg = config or InstanceConfig()
    cfg.validate()
    if not 2 <= size <= 200:
        raise InputError("size must lie in 2..200")
    if seed < 0:
        raise InputError("seed must be non-negative")
    rng = np.random.Generator(np.random.Philox(key=seed))
    coords = rng.random(size * cfg.dim).reshape(size, cfg.dim)
    space = MetricSpace(coords=coords)
    mu1 = _draw_prior(rng, size, cfg, space)
    mu2 = _draw_prior(rng, size, cfg, space)
    m1 = cfg.misfit_cap * rng.random(size)
    m2 = cfg.misfit_cap * rng.random(size)
    return ProblemInstance(space, mu1, mu2, Misfit(m1 - m1.min()), Misfit(m2 - m2.min()), seed,
                           {"size": size, "config": cfg})


# -- perturbation variants ----------------------------------------------------------

def evidence_matched_misfit(mu: DiscreteMeasure, phi_ref, phi) -> Misfit:
    """phi shifted onto the evidence level set of phi_ref."""
    v = as_values(phi)
    return Misfit(v + (log_evidence(mu, v) - log_evidence(mu, phi_ref)))


def evidence_matched_prior(mu: DiscreteMeasure, phi, direction=None) -> DiscreteMeasure | None:
    """A prior different from mu with the same mass and evidence under phi.

    Moves mu along a direction orthogonal to 1 and exp(-phi) on supp mu.
    Returns None when the support is too small for such a direction.
    """
    s = mu.support
    if len(s) < 3:
        return None
    v = as_values(phi)
    e = np.exp(-(v[s] - v[s].min()))
    basis = np.stack([np.ones(len(s)), e], axis=1)
    candidates = []
    if direction is not None:
        candidates.append(np.asarray(direction, dtype=float)[s])
    candidates.append(np.sin(np.arange(1, len(s) + 1) * 1.7))
    for r in candidates:
        coef, *_ = np.linalg.lstsq(basis, r, rcond=None)
        d = r - basis @ coef
        if np.abs(d).max() > 1e-8 * max(1.0, np.abs(r).max()):
            break
    else:
        return None
    w = mu.weights[s]
    neg = d < 0
    step = 0.5 * float((w[neg] / -d[neg]).min())
    new = np.zeros(mu.space.n)
    new[s] = np.maximum(w + step * d, 0.0)
    return DiscreteMeasure(mu.space, new / math.fsum(new))


def _default_ops() -> dict[str, Callable]:
    return {
        "tv_misfit": B.tv_misfit_bounds,
        "tv_prior": B.tv_prior_bounds,
        "hellinger_misfit": B.hellinger_misfit_bounds,
        "hellinger_prior": B.hellinger_prior_bounds,
        "kl_joint": B.kl_joint_bounds,
        "w1_misfit": B.w1_misfit_bounds,
        "w1_prior": B.w1_prior_bounds,
    }


def instance_reports(inst: ProblemInstance, ops: Mapping[str, Callable] | None = None,
                     toggles: Mapping[str, bool] | None = None):
    """Yield (proposition, variant, BoundReport) for every perturbation variant."""
    table = _default_ops()
    if ops:
        table.update(ops)
    on = {k: True for k in table}
    if toggles:
        on.update(toggles)
    mu1, mu2 = inst.prior1, inst.prior2 or inst.prior1
    p1 = inst.misfit1
    p2 = inst.misfit2 if inst.misfit2 is not None else inst.misfit1
    p2z = evidence_matched_misfit(mu1, p1, p2)
    p1c = p1 + 0.731
    mu2z = evidence_matched_prior(mu1, p1, direction=mu2.weights - mu1.weights)
    misfit_variants = [("raw", p1, p2), ("evidence_matched", p1, p2z), ("constant_shift", p1, p1c)]
    prior_variants = [("raw", mu1, mu2)]
    if mu2z is not None:
        prior_variants.append(("evidence_matched", mu1, mu2z))
    for metric in ("tv", "hellinger", "w1"):
        name = f"{metric}_misfit"
        if on.get(name, True):
            for tag, a, b in misfit_variants:
                yield name, tag, table[name](mu1, a, b)
        name = f"{metric}_prior"
        if on.get(name, True):
            for tag, m1, m2 in prior_variants:
                yield name, tag, table[name](m1, m2, p1)
    if on.get("kl_joint", True):
        op = table["kl_joint"]
        yield "kl_joint", "joint", op(mu1, p1, mu2, p2)
        yield "kl_joint", "joint_reversed", op(mu2, p2, mu1, p1)
        yield "kl_joint", "misfit_only", op(mu1, p1, mu1, p2)
        yield "kl_joint", "misfit_only_matched", op(mu1, p1, mu1, p2z)
        yield "kl_joint", "prior_only", op(mu1, p1, mu2, p1)
        if mu2z is not None:
            yield "kl_joint", "prior_only_equivalent", op(mu1, p1, mu2z, p1)


def instance_aux(inst: ProblemInstance) -> dict[str, dict]:
    p2 = inst.misfit2 if inst.misfit2 is not None else inst.misfit1
    out = {"misfit": B.aux_lemma_suite(inst.prior1, inst.misfit1, p2)}
    if inst.prior2 is not None:
        out["prior"] = B.aux_lemma_suite((inst.prior1, inst.prior2), inst.misfit1)
    return out


# -- sweep ------------------------------------------------------------------------------

AUX_TOL = 1e-10


@dataclass(frozen=True)
class SweepConfig:
    seeds: int = 500
    min_size: int = 2
    max_size: int = 30
    first_seed: int = 0
    instance: InstanceConfig = InstanceConfig()
    toggles: Mapping[str, bool] | None = None
    workers: int = 1

    def validate(self) -> None:
        if self.seeds < 1:
            raise InputError("need at least one seed")
        if not 2 <= self.min_size <= self.max_size <= 200:
            raise InputError("sizes must satisfy 2 <= min <= max <= 200")
        if self.first_seed < 0:
            raise InputError("first seed must be non-negative")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        self.instance.validate()

    def size_for(self, seed: int) -> int:
        return self.min_size + seed % (self.max_size - self.min_size + 1)


@dataclass
class PropositionSummary:
    evaluated: int = 0
    applicable: int = 0
    min_slack_lower: float | None = None
    min_slack_upper: float | None = None
    worst_seed_lower: int | None = None
    worst_seed_upper: int | None = None
    bound_applicable: dict = field(default_factory=dict)
    min_check: float | None = None
    max_identity: float | None = None

    def _min(self, attr, value, seed, seed_attr=None):
        cur = getattr(self, attr)
        if cur is None or value < cur:
            setattr(self, attr, value)
            if seed_attr:
                setattr(self, seed_attr, seed)

    def absorb(self, rep: B.BoundReport, seed: int) -> None:
        self.evaluated += 1
        live = False
        for table in (rep.lower_bounds, rep.upper_bounds):
            for k, v in table.items():
                if not B.is_na(v):
                    live = True
        if live:
            self.applicable += 1
        for key, s in rep.slacks().items():
            self.bound_applicable[key] = self.bound_applicable.get(key, 0) + 1
            if key.startswith("lower:"):
                self._min("min_slack_lower", s, seed, "worst_seed_lower")
            else:
                self._min("min_slack_upper", s, seed, "worst_seed_upper")
        for v in rep.checks.values():
            if not B.is_na(v):
                self._min("min_check", v, seed)
        for v in rep.identities.values():
            if not B.is_na(v) and (self.max_identity is None or v > self.max_identity):
                self.max_identity = v

    def merge(self, other: "PropositionSummary") -> None:
        self.evaluated += other.evaluated
        self.applicable += other.applicable
        for attr, seed_attr in (("min_slack_lower", "worst_seed_lower"), ("min_slack_upper", "worst_seed_upper")):
            v = getattr(other, attr)
            if v is not None:
                cur = getattr(self, attr)
                better = cur is None or v < cur or (v == cur and getattr(other, seed_attr) < getattr(self, seed_attr))
                if better:
                    setattr(self, attr, v)
                    setattr(self, seed_attr, getattr(other, seed_attr))
        for k, n in other.bound_applicable.items():
            self.bound_applicable[k] = self.bound_applicable.get(k, 0) + n
        if other.min_check is not None:
            self._min("min_check", other.min_check, None)
        if other.max_identity is not None and (self.max_identity is None or other.max_identity > self.max_identity):
            self.max_identity = other.max_identity

    def to_dict(self) -> dict:
        na = "not-applicable"
        return {
            "evaluated": self.evaluated,
            "applicable": self.applicable,
            "min_slack_lower": na if self.min_slack_lower is None else self.min_slack_lower,
            "min_slack_upper": na if self.min_slack_upper is None else self.min_slack_upper,
            "worst_seed_lower": self.worst_seed_lower,
            "worst_seed_upper": self.worst_seed_upper,
            "min_check_residual": na if self.min_check is None else self.min_check,
            "max_identity_residual": na if self.max_identity is None else self.max_identity,
            "bound_applicable": dict(sorted(self.bound_applicable.items())),
        }


@dataclass
class SweepReport:
    config: dict
    propositions: dict[str, PropositionSummary]
    aux_min_residual: float | None
    violations: list[dict]

    @property
    def passed(self) -> bool:
        return not self.violations

    def failed_propositions(self) -> list[str]:
        return sorted({v["proposition"] for v in self.violations})

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "passed": self.passed,
            "propositions": {k: v.to_dict() for k, v in sorted(self.propositions.items())},
            "aux_lemmas": {"min_residual": self.aux_min_residual},
            "violations": self.violations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _evaluate_seed(seed: int, cfg: SweepConfig, ops=None):
    inst = generate_instance(seed, cfg.size_for(seed), cfg.instance)
    props: dict[str, PropositionSummary] = {}
    bad = []
    for prop, variant, rep in instance_reports(inst, ops, cfg.toggles):
        props.setdefault(prop, PropositionSummary()).absorb(rep, seed)
        for msg in rep.violations():
            bad.append({"seed": seed, "proposition": prop, "variant": variant, "detail": msg})
    aux_min = None
    if cfg.toggles is None or cfg.toggles.get("aux_lemmas", True):
        for mode, res in instance_aux(inst).items():
            for k, v in res.items():
                if B.is_na(v):
                    continue
                aux_min = v if aux_min is None else min(aux_min, v)
                if not v >= -AUX_TOL:
                    bad.append({"seed": seed, "proposition": "aux_lemmas", "variant": mode,
                                "detail": f"{k} residual {v:.3e}"})
    return seed, props, aux_min, bad


def run_verification_sweep(config: SweepConfig | None = None,
                           ops: Mapping[str, Callable] | None = None) -> SweepReport:
    cfg = config or SweepConfig()
    cfg.validate()
    seeds = range(cfg.first_seed, cfg.first_seed + cfg.seeds)
    if cfg.workers > 1 and not ops:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_evaluate_seed, seeds, [cfg] * len(seeds), chunksize=8))
    else:
        results = [_evaluate_seed(s, cfg, ops) for s in seeds]
    props: dict[str, PropositionSummary] = {}
    aux_min = None
    bad = []
    for _, p, a, v in sorted(results, key=lambda r: r[0]):
        for k, summ in p.items():
            props.setdefault(k, PropositionSummary()).merge(summ)
        if a is not None:
            aux_min = a if aux_min is None else min(aux_min, a)
        bad.extend(v)
    ic = cfg.instance
    summary = {"seeds": cfg.seeds, "first_seed": cfg.first_seed, "min_size": cfg.min_size,
               "max_size": cfg.max_size, "misfit_cap": ic.misfit_cap, "dim": ic.dim,
               "concentration": ic.concentration, "sparsify": ic.sparsify,
               "toggles": dict(sorted((cfg.toggles or {}).items())),
               "slack_tol": B.SLACK_TOL, "rng": "philox4x64"}
    return SweepReport(summary, props, aux_min, bad)


# -- sensitivity ------------------------------------------------------------------------

_MISFIT_OPS = {"tv": B.tv_misfit_bounds, "hellinger": B.hellinger_misfit_bounds, "w1": B.w1_misfit_bounds}
_PRIOR_OPS = {"tv": B.tv_prior_bounds, "hellinger": B.hellinger_prior_bounds, "w1": B.w1_prior_bounds}


def _row(beta, z1, z2, metric, rep: B.BoundReport) -> dict:
    lows = [v for v in rep.lower_bounds.values() if not B.is_na(v)]
    ups = [v for v in rep.upper_bounds.values() if not B.is_na(v)]
    if not math.isfinite(rep.actual):
        lows = []
    return {"beta": beta, "Z1": z1, "Z2": z2, "metric": metric, "actual": rep.actual,
            "best_lower": max(lows) if lows else None, "best_upper": min(ups) if ups else None,
            "applicable": len(lows) + len(ups), "violations": rep.violations()}


def sensitivity_sweep(inst: ProblemInstance, betas: Sequence[float], mode: str | None = None,
                      metrics: Sequence[str] = METRICS) -> list[dict]:
    """Rows of (beta, Z1, Z2, metric, actual, best bounds) for Phi_beta = beta Phi0.

    mode "misfit" perturbs beta Phi0 by misfit2 - misfit1; mode "prior"
    keeps beta Phi0 and swaps prior1 for prior2.  The default picks misfit
    when a second misfit is given.
    """
    betas = [float(b) for b in betas]
    if not betas or any(not (math.isfinite(b) and b >= 0) for b in betas):
        raise InputError("beta grid must be finite and non-negative")
    if mode is None:
        mode = "misfit" if inst.misfit2 is not None else "prior"
    for m in metrics:
        if m not in METRICS:
            raise InputError(f"unknown metric {m!r}")
    phi0 = as_values(inst.misfit1)
    mu1 = inst.prior1
    rows = []
    if mode == "misfit":
        if inst.misfit2 is None:
            raise InputError("misfit sensitivity needs misfit2")
        dphi = as_values(inst.misfit2) - phi0
        for b in betas:
            f1, f2 = b * phi0, b * phi0 + dphi
            z1, z2 = posterior(mu1, f1).evidence, posterior(mu1, f2).evidence
            for m in metrics:
                rep = B.kl_joint_bounds(mu1, f1, mu1, f2) if m == "kl" else _MISFIT_OPS[m](mu1, f1, f2)
                rows.append(_row(b, z1, z2, m, rep))
    elif mode == "prior":
        if inst.prior2 is None:
            raise InputError("prior sensitivity needs prior2")
        mu2 = inst.prior2
        for b in betas:
            f = b * phi0
            z1, z2 = posterior(mu1, f).evidence, posterior(mu2, f).evidence
            for m in metrics:
                rep = B.kl_joint_bounds(mu1, f, mu2, f) if m == "kl" else _PRIOR_OPS[m](mu1, mu2, f)
                rows.append(_row(b, z1, z2, m, rep))
    else:
        raise InputError(f"unknown sensitivity mode {mode!r}")
    return rows


def sensitivity_ok(rows: Sequence[dict]) -> bool:
    """Every applicable sandwich contains the actual value; Z1 non-increasing in beta."""
    if any(r["violations"] for r in rows):
        return False
    zs = {}
    for r in rows:
        zs.setdefault(r["beta"], r["Z1"])
    ordered = [zs[b] for b in sorted(zs)]
    return all(b <= a * (1 + 1e-12) for a, b in zip(ordered, ordered[1:]))


def sensitivity_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SENSITIVITY_COLUMNS)
    for r in rows:
        w.writerow(["" if r[c] is None else (repr(float(r[c])) if isinstance(r[c], float) else r[c])
                    for c in SENSITIVITY_COLUMNS])
    return buf.getvalue()


# -- problem files and single reports -----------------------------------------------------

def load_problem(source) -> ProblemInstance:
    """Parse a problem-spec JSON document (path, file object or dict)."""
    if isinstance(source, Mapping):
        doc = source
    else:
        try:
            if hasattr(source, "read"):
                doc = json.load(source)
            else:
                with open(source) as fh:
                    doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read problem file: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise InputError("problem file must hold a JSON object")
    try:
        if ("points" in doc) == ("distance_matrix" in doc):
            raise InputError("give exactly one of points or distance_matrix")
        if "points" in doc:
            space = MetricSpace(coords=np.asarray(doc["points"], dtype=float))
        else:
            space = MetricSpace(dist=np.asarray(doc["distance_matrix"], dtype=float))
        for key in ("prior1", "misfit1"):
            if key not in doc:
                raise InputError(f"missing {key}")
        mu1 = DiscreteMeasure(space, doc["prior1"])
        mu2 = DiscreteMeasure(space, doc["prior2"]) if doc.get("prior2") is not None else None
        m1 = Misfit(doc["misfit1"])
        m2 = Misfit(doc["misfit2"]) if doc.get("misfit2") is not None else None
        for m in (m1, m2):
            if m is not None and len(m) != space.n:
                raise InputError("misfit length does not match the space")
    except InputError:
        raise
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    return ProblemInstance(space, mu1, mu2, m1, m2, None, {"source": "file"})


def bounds_for(inst: ProblemInstance, metric: str, perturbation: str) -> B.BoundReport:
    if metric not in METRICS:
        raise InputError(f"unknown metric {metric!r}")
    if perturbation not in PERTURBATIONS:
        raise InputError(f"unknown perturbation {perturbation!r}")
    mu1, mu2, m1, m2 = inst.prior1, inst.prior2, inst.misfit1, inst.misfit2
    if metric == "kl":
        if perturbation == "misfit":
            if m2 is None:
                raise InputError("misfit perturbation needs misfit2")
            return B.kl_joint_bounds(mu1, m1, mu1, m2)
        if perturbation == "prior":
            if mu2 is None:
                raise InputError("prior perturbation needs prior2")
            return B.kl_joint_bounds(mu1, m1, mu2, m1)
        return B.kl_joint_bounds(mu1, m1, mu2 or mu1, m2 if m2 is not None else m1)
    if perturbation == "joint":
        raise InputError("joint perturbations are only defined for kl")
    if perturbation == "misfit":
        if m2 is None:
            raise InputError("misfit perturbation needs misfit2")
        return _MISFIT_OPS[metric](mu1, m1, m2)
    if mu2 is None:
        raise InputError("prior perturbation needs prior2")
    return _PRIOR_OPS[metric](mu1, mu2, m1)


class UnknownExampleError(InputError):
    pass


def reproduce(example_id: str, **kwargs) -> Certificate:
    try:
        build = EXAMPLES[example_id]
    except KeyError:
        raise UnknownExampleError(
            f"unknown example {example_id!r}; known: {', '.join(sorted(EXAMPLES))}") from None
    return build(**{k: v for k, v in kwargs.items() if v is not None})
