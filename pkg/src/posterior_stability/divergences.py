"""TV, Hellinger and KL between measures on one space, plus scalar envelopes."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .measure_core import DiscreteMeasure, same_space


def _pair(mu1: DiscreteMeasure, mu2: DiscreteMeasure):
    same_space(mu1, mu2)
    p = np.where(mu1.mask, mu1.weights, 0.0)
    q = np.where(mu2.mask, mu2.weights, 0.0)
    return p, q


def total_variation(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    p, q = _pair(mu1, mu2)
    return 0.5 * math.fsum(np.abs(p - q))


def hellinger(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    """L2 distance of root densities; sqrt(2) for singular measures."""
    p, q = _pair(mu1, mu2)
    return math.sqrt(math.fsum((np.sqrt(p) - np.sqrt(q)) ** 2))


def kullback_leibler(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    """KL(mu1 || mu2); ``math.inf`` when supp mu1 is not inside supp mu2."""
    p, q = _pair(mu1, mu2)
    if np.any(mu1.mask & ~mu2.mask):
        return math.inf
    s = mu1.mask
    val = math.fsum(p[s] * np.log(p[s] / q[s]))
    return max(val, 0.0)


def abs_log_ratio_integral(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
    """Integral of |log d mu1/d mu2| against mu1."""
    p, q = _pair(mu1, mu2)
    if np.any(mu1.mask & ~mu2.mask):
        return math.inf
    s = mu1.mask
    return math.fsum(p[s] * np.abs(np.log(p[s] / q[s])))


class Envelope(NamedTuple):
    lower: float
    actual: float
    upper: float


def scalar_envelopes(a, b, kind: str = "log") -> Envelope:
    """Two-sided Lipschitz envelope of log or exp.

    kind="log": |s-t|/(s v t) <= |log t - log s| <= |s-t|/(s ^ t), s, t > 0.
    kind="exp": (e^x ^ e^y)|x-y| <= |e^x - e^y| <= (e^x v e^y)|x-y|.
    Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind == "log":
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("log envelope needs positive arguments")
        gap = np.abs(a - b)
        env = Envelope(gap / np.maximum(a, b), np.abs(np.log(b / a)), gap / np.minimum(a, b))
    elif kind == "exp":
        gap = np.abs(a - b)
        ea, eb = np.exp(a), np.exp(b)
        env = Envelope(np.minimum(ea, eb) * gap, np.abs(ea - eb), np.maximum(ea, eb) * gap)
    else:
        raise ValueError(f"unknown envelope kind {kind!r}")
    if env.actual.ndim == 0:
        return Envelope(*(float(x) for x in env))
    return env
