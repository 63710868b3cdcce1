"""Finite metric spaces, discrete measures and misfits.

Everything here is immutable once built.  Essential bounds, radii and
Lipschitz constants are exact min/max computations over the support, where
the support is the set of indices whose weight exceeds ``zero_tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

TRIANGLE_TOL = 1e-12
SUM_TOL = 1e-12
ZERO_WEIGHT_TOL = 1e-15


class NotDominatedError(ValueError):
    """Raised when absolute continuity fails; carries the witnessing index."""

    def __init__(self, index: int):
        super().__init__(f"not absolutely continuous: weight positive at index {index} "
                         "where the reference measure vanishes")
        self.index = index


@dataclass(frozen=True)
class Violation:
    axiom: str
    indices: tuple[int, ...]
    amount: float

    def __str__(self) -> str:
        return f"{self.axiom} at {self.indices} (by {self.amount:.3e})"


class MetricSpace:
    """Finite point set with a distance matrix.

    Either ``dist`` or ``coords`` must be given.  With coordinates only, the
    Euclidean matrix is built on first use, so large 1D grids cost nothing
    until a distance is actually needed.
    """

    def __init__(self, labels: Sequence | None = None, dist=None, coords=None,
                 check: bool = True):
        if dist is None and coords is None:
            raise ValueError("need a distance matrix or coordinates")
        if coords is not None:
            c = np.asarray(coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.ndim != 2 or not np.all(np.isfinite(c)):
                raise ValueError("coords must be a finite n x k array")
            c.setflags(write=False)
            self._coords = c
            n = c.shape[0]
        else:
            self._coords = None
        if dist is not None:
            d = np.array(dist, dtype=float)
            if d.ndim != 2 or d.shape[0] != d.shape[1]:
                raise ValueError("dist must be a square matrix")
            d.setflags(write=False)
            self.__dict__["dist"] = d
            n = d.shape[0]
        if coords is not None and dist is not None and self._coords.shape[0] != n:
            raise ValueError("coords and dist disagree on the number of points")
        if n < 1:
            raise ValueError("a metric space needs at least one point")
        self.n = n
        self.labels = tuple(labels) if labels is not None else tuple(range(n))
        if len(self.labels) != n:
            raise ValueError("labels length does not match the number of points")
        if check:
            # Euclidean distances from coordinates satisfy the axioms by construction.
            problems = validate_space(self) if dist is not None else []
            if problems:
                raise ValueError("invalid metric space: " + "; ".join(map(str, problems[:5])))

    @property
    def coords(self):
        return self._coords

    @cached_property
    def dist(self) -> np.ndarray:
        c = self._coords
        if c.shape[1] == 1:
            d = np.abs(c[:, 0][:, None] - c[:, 0][None, :])
        else:
            d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1))
        d.setflags(write=False)
        return d

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"MetricSpace(n={self.n})"


def validate_space(space: MetricSpace, tol: float = TRIANGLE_TOL) -> list[Violation]:
    """List every violated metric axiom, naming the offending indices."""
    d = np.asarray(space.dist, dtype=float)
    n = d.shape[0]
    out: list[Violation] = []
    if not np.all(np.isfinite(d)):
        for i, j in zip(*np.nonzero(~np.isfinite(d))):
            out.append(Violation("finite", (int(i), int(j)), math.inf))
        return out
    for i, j in zip(*np.nonzero(d < 0)):
        out.append(Violation("non-negativity", (int(i), int(j)), float(-d[i, j])))
    for i in np.nonzero(np.abs(np.diag(d)) > tol)[0]:
        out.append(Violation("zero diagonal", (int(i), int(i)), float(abs(d[i, i]))))
    asym = np.abs(d - d.T)
    for i, j in zip(*np.nonzero(np.triu(asym > tol, 1))):
        out.append(Violation("symmetry", (int(i), int(j)), float(asym[i, j])))
    # d(i,j) <= d(i,k) + d(k,j), one intermediate point at a time
    for k in range(n):
        excess = d - (d[:, k][:, None] + d[k, :][None, :])
        for i, j in zip(*np.nonzero(excess > tol)):
            if i < j:
                out.append(Violation("triangle", (int(i), k, int(j)), float(excess[i, j])))
    if space.coords is not None and "dist" in space.__dict__:
        c = space.coords
        eu = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1))
        bad = np.abs(eu - d) > tol
        for i, j in zip(*np.nonzero(np.triu(bad))):
            out.append(Violation("coords mismatch", (int(i), int(j)), float(abs(eu[i, j] - d[i, j]))))
    return out


class DiscreteMeasure:
    """Non-negative weights over the points of a MetricSpace."""

    def __init__(self, space: MetricSpace, weights, is_probability: bool = True,
                 zero_tol: float = ZERO_WEIGHT_TOL):
        w = np.array(weights, dtype=float).ravel()
        if w.shape[0] != space.n:
            raise ValueError(f"expected {space.n} weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if is_probability and abs(math.fsum(w) - 1.0) > SUM_TOL:
            raise ValueError(f"probability weights sum to {math.fsum(w)!r}")
        w.setflags(write=False)
        self.space = space
        self.weights = w
        self.is_probability = is_probability
        self.zero_tol = zero_tol
        mask = w > zero_tol
        if not mask.any():
            raise ValueError("measure has empty support")
        mask.setflags(write=False)
        self.mask = mask
        self.support = np.flatnonzero(mask)

    @classmethod
    def uniform(cls, space: MetricSpace, indices: Iterable[int] | None = None) -> "DiscreteMeasure":
        w = np.zeros(space.n)
        idx = np.arange(space.n) if indices is None else np.asarray(list(indices), dtype=int)
        w[idx] = 1.0 / len(idx)
        return cls(space, w)

    def mass(self) -> float:
        return math.fsum(self.weights)

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={self.space.n}, support={len(self.support)})"


class Misfit:
    """Finite real value per point."""

    def __init__(self, values):
        v = np.array(values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("misfit values must be finite")
        v.setflags(write=False)
        self.values = v

    def __len__(self) -> int:
        return self.values.shape[0]

    def __add__(self, other) -> "Misfit":
        o = other.values if isinstance(other, Misfit) else other
        return Misfit(self.values + o)

    def __repr__(self) -> str:
        return f"Misfit(n={len(self)})"


def as_values(f) -> np.ndarray:
    return f.values if isinstance(f, Misfit) else np.asarray(f, dtype=float)


def same_space(*measures: DiscreteMeasure) -> MetricSpace:
    space = measures[0].space
    for m in measures[1:]:
        if m.space is not space:
            raise ValueError("measures live on different MetricSpace objects")
    return space


def radius(mu: DiscreteMeasure) -> float:
    """Diameter of supp mu."""
    s = mu.support
    if len(s) == 0:
        raise ValueError("empty support")
    if len(s) == 1:
        return 0.0
    c = mu.space.coords
    if c is not None and c.shape[1] == 1 and "dist" not in mu.space.__dict__:
        x = c[s, 0]
        return float(x.max() - x.min())
    return float(mu.space.dist[np.ix_(s, s)].max())


def lipschitz_norm(f, space: MetricSpace, restrict=None) -> float:
    """max |f(x)-f(y)|/d(x,y) over distinct pairs of ``restrict``.

    Returns ``math.inf`` when two restricted points sit at distance zero
    with different values.
    """
    v = as_values(f)
    idx = np.arange(space.n) if restrict is None else np.asarray(restrict, dtype=int)
    if len(idx) == 0:
        raise ValueError("empty restriction set")
    if len(idx) == 1:
        return 0.0
    d = space.dist[np.ix_(idx, idx)]
    fv = v[idx]
    num = np.abs(fv[:, None] - fv[None, :])
    off = ~np.eye(len(idx), dtype=bool)
    zero = off & (d == 0)
    if np.any(num[zero] > 0):
        return math.inf
    ok = off & (d > 0)
    if not ok.any():
        return 0.0
    return float((num[ok] / d[ok]).max())


def ess_bounds(f, mu: DiscreteMeasure) -> tuple[float, float]:
    v = as_values(f)[mu.support]
    if v.size == 0:
        raise ValueError("empty support")
    return float(v.min()), float(v.max())


def sup_norm(f, mu: DiscreteMeasure) -> float:
    """L-infinity norm over supp mu."""
    return float(np.abs(as_values(f)[mu.support]).max())


def lp_norm(f, mu: DiscreteMeasure, p: float = 1.0) -> float:
    v = np.abs(as_values(f)[mu.support])
    w = mu.weights[mu.support]
    if p == 1:
        return math.fsum(v * w)
    return math.fsum(v ** p * w) ** (1.0 / p)


def integrate(f, mu: DiscreteMeasure) -> float:
    s = mu.support
    return math.fsum(as_values(f)[s] * mu.weights[s])


def dominated(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> bool:
    """Support inclusion supp mu1 within supp mu2."""
    return not np.any(mu1.mask & ~mu2.mask)


def radon_nikodym(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> np.ndarray:
    """Density d mu1 / d mu2, zero off supp mu2."""
    same_space(mu1, mu2)
    bad = np.flatnonzero(mu1.mask & ~mu2.mask)
    if len(bad):
        raise NotDominatedError(int(bad[0]))
    r = np.zeros(mu1.space.n)
    s = mu2.support
    r[s] = np.where(mu1.mask[s], mu1.weights[s], 0.0) / mu2.weights[s]
    return r


def pth_moment(mu: DiscreteMeasure, p: float, base: int) -> float:
    if p < 1:
        raise ValueError("p must be at least 1")
    if not 0 <= base < mu.space.n:
        raise ValueError("base index outside the space")
    s = mu.support
    d = mu.space.dist[base, s]
    return math.fsum(d ** p * mu.weights[s]) ** (1.0 / p)
