"""Exact discrete optimal transport and Kantorovich dual certificates.

The solver is a transportation simplex on the bipartite graph between the
two supports: north-west corner start, Dantzig pricing with a switch to
Bland's rule when pivots stall, and a final re-solve of the flows on the
optimal spanning tree so the marginals hold to rounding.  On 1D spaces the
supports are sorted first, which makes the starting plan optimal.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .measure_core import DiscreteMeasure, lipschitz_norm, same_space

MARGINAL_TOL = 1e-10
LIP_TOL = 1e-10
STALL_LIMIT = 50


@dataclass(frozen=True)
class TransportPlan:
    plan: np.ndarray
    cost: float


@dataclass(frozen=True)
class DualCertificate:
    potential: np.ndarray
    base_index: int
    objective: float
    support: np.ndarray
    witness: np.ndarray

    def lipschitz(self, space) -> float:
        return lipschitz_norm(self.potential, space, self.support)


@dataclass(frozen=True)
class _Solution:
    rows: np.ndarray
    cols: np.ndarray
    flow: np.ndarray
    u: np.ndarray
    v: np.ndarray
    cost: float
    pivots: int


def _potentials(n, m, adj, C):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    todo = deque([0])
    while todo:
        node = todo.popleft()
        for other in adj[node]:
            if other >= n:
                j = other - n
                if math.isnan(v[j]):
                    v[j] = C[node, j] - u[node]
                    todo.append(other)
            else:
                if math.isnan(u[other]):
                    u[other] = C[other, node - n] - v[node - n]
                    todo.append(other)
    return u, v


def _tree_path(adj, start, goal):
    parent = {start: None}
    todo = deque([start])
    while todo:
        node = todo.popleft()
        if node == goal:
            break
        for other in adj[node]:
            if other not in parent:
                parent[other] = node
                todo.append(other)
    path = []
    node = goal
    while parent[node] is not None:
        path.append((parent[node], node))
        node = parent[node]
    return path


def _exact_flows(n, m, a, b, cells):
    # peel leaves of the spanning tree; each leaf fixes its single edge
    supply = np.concatenate([a, b]).astype(float)
    adj = [set() for _ in range(n + m)]
    for i, j in cells:
        adj[i].add(n + j)
        adj[n + j].add(i)
    deg = np.array([len(s) for s in adj])
    flows = {}
    leaves = deque(sorted(k for k in range(n + m) if deg[k] == 1))
    while leaves:
        k = leaves.popleft()
        if deg[k] != 1:
            continue
        (o,) = adj[k]
        x = supply[k]
        cell = (k, o - n) if k < n else (o, k - n)
        flows[cell] = x
        supply[o] -= x
        adj[o].discard(k)
        adj[k].clear()
        deg[k] = 0
        deg[o] -= 1
        if deg[o] == 1:
            leaves.append(o)
    return flows


def _solve(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> _Solution:
    n, m = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    flow: dict[tuple[int, int], float] = {}
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[(i, j)] = x
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    adj = [set() for _ in range(n + m)]
    for (i, j) in flow:
        adj[i].add(n + j)
        adj[n + j].add(i)

    scale = max(1.0, float(np.abs(C).max()))
    tol = 1e-12 * scale
    pivots = 0
    stall = 0
    while True:
        u, v = _potentials(n, m, adj, C)
        rc = C - u[:, None] - v[None, :]
        if stall < STALL_LIMIT:
            k = int(np.argmin(rc))
            if rc.flat[k] >= -tol:
                break
        else:
            cand = np.flatnonzero(rc.ravel() < -tol)
            if len(cand) == 0:
                break
            k = int(cand[0])
        ei, ej = divmod(k, m)
        path = _tree_path(adj, ei, n + ej)
        # path runs from column ej back to row ei; signs alternate starting with minus
        minus = []
        plus = []
        for pos, (p, q) in enumerate(path):
            cell = (p, q - n) if p < n else (q, p - n)
            (minus if pos % 2 == 0 else plus).append(cell)
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        del flow[leaving]
        flow[(ei, ej)] = theta
        li, lj = leaving
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        adj[ei].add(n + ej)
        adj[n + ej].add(ei)
        pivots += 1
        stall = stall + 1 if theta == 0 else 0

    exact = _exact_flows(n, m, a, b, list(flow))
    cells = sorted(exact)
    rows = np.array([c[0] for c in cells], dtype=int)
    cols = np.array([c[1] for c in cells], dtype=int)
    fl = np.maximum(np.array([exact[c] for c in cells]), 0.0)
    cost = math.fsum(fl * C[rows, cols])
    return _Solution(rows, cols, fl, u, v, cost, pivots)


def _prepare(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float):
    space = same_space(mu, nu)
    if p < 1:
        raise ValueError("p must be at least 1")
    if not (mu.is_probability and nu.is_probability):
        raise ValueError("transport needs probability measures")
    s, t = mu.support, nu.support
    c = space.coords
    if c is not None and c.shape[1] == 1:
        # on the line the north-west corner of the sorted supports is already optimal
        s = s[np.argsort(c[s, 0], kind="stable")]
        t = t[np.argsort(c[t, 0], kind="stable")]
    a = mu.weights[s] / math.fsum(mu.weights[s])
    b = nu.weights[t] / math.fsum(nu.weights[t])
    D = space.dist[np.ix_(s, t)]
    return space, s, t, a, b, D


def _identical(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    return mu is nu or (np.array_equal(mu.mask, nu.mask)
                        and np.array_equal(mu.weights[mu.mask], nu.weights[nu.mask]))


def wasserstein_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0):
    """Exact W_p and an optimal plan on the full index set."""
    space, s, t, a, b, D = _prepare(mu, nu, p)
    n = space.n
    plan = np.zeros((n, n))
    if _identical(mu, nu):
        plan[s, s] = mu.weights[s]
        return 0.0, TransportPlan(plan, 0.0)
    sol = _solve(a, b, D ** p)
    plan[s[sol.rows], t[sol.cols]] = sol.flow
    cost = max(sol.cost, 0.0)
    return cost ** (1.0 / p), TransportPlan(plan, cost)


def kantorovich_dual(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DualCertificate:
    """1-Lipschitz optimiser f with f(base) = 0 and objective = W_1 up to 1e-8."""
    return w1_with_certificate(mu, nu)[2]


def w1_with_certificate(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """(W_1, plan, certificate) from a single solve."""
    space, s, t, a, b, D = _prepare(mu, nu, 1.0)
    n = space.n
    union = np.flatnonzero(mu.mask | nu.mask)
    base = int(union[0])
    if _identical(mu, nu):
        plan = np.zeros((n, n))
        plan[s, s] = mu.weights[s]
        cert = DualCertificate(np.zeros(n), base, 0.0, union, np.full(n, -1))
        return 0.0, TransportPlan(plan, 0.0), cert
    sol = _solve(a, b, D)
    plan = np.zeros((n, n))
    plan[s[sol.rows], t[sol.cols]] = sol.flow
    # c-transform of the demand potentials: f(x) = min_y (-v_y + d(x, y))
    cand = -sol.v[None, :] + space.dist[:, t]
    arg = np.argmin(cand, axis=1)
    f = cand[np.arange(n), arg]
    f = f - f[base]
    f.setflags(write=False)
    obj = abs(math.fsum(f[s] * a) - math.fsum(f[t] * b))
    cert = DualCertificate(f, base, obj, union, t[arg])
    value = max(sol.cost, 0.0)
    return value, TransportPlan(plan, value), cert
