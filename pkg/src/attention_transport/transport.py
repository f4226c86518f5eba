"""Exact 1-Wasserstein distance between discrete measures (L1 ground cost).

The transportation problem is solved by a network simplex (MODI pivoting on
a spanning-tree basis). Masses are first mapped onto an integer grid of
``MASS_SCALE`` units so every basic flow stays an exact integer; this
rounding is the only source of the 1e-9 tolerance used in the checks.
Optimality is certified by the returned dual potentials, not assumed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (DimensionMismatch, NonUniformWeights, ProductTooLarge,
                     SolverFailure, UnequalSizes)
from .measures import DiscreteMeasure, WEIGHT_TOL

MASS_SCALE = 10**12
CERT_TOL = 1e-9
PRODUCT_CAP = 10_000


@dataclass(frozen=True, eq=False)
class TransportPlan:
    coupling: np.ndarray
    cost: float
    dual_source: np.ndarray
    dual_target: np.ndarray

    def triples(self, threshold: float = 0.0) -> List[Tuple[int, int, float]]:
        """Sparse ``(i, j, mass)`` entries of the coupling above ``threshold``."""
        ii, jj = np.nonzero(self.coupling > threshold)
        return [(int(i), int(j), float(self.coupling[i, j])) for i, j in zip(ii, jj)]

    def to_json(self) -> dict:
        return {
            "shape": list(self.coupling.shape),
            "cost": self.cost,
            "coupling": [list(t) for t in self.triples()],
            "dual_source": self.dual_source.tolist(),
            "dual_target": self.dual_target.tolist(),
        }


def l1_cost_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.abs(x[:, None, :] - y[None, :, :]).sum(axis=2)


def integer_masses(weights: np.ndarray, scale: int = MASS_SCALE,
                   points: Optional[np.ndarray] = None) -> np.ndarray:
    """Round ``weights * scale`` to integers summing exactly to ``scale``.

    The rounding remainder goes to the heaviest atom. Ties are broken by the
    lexicographically smallest point when ``points`` is given, so the result
    does not depend on atom order.
    """
    weights = np.asarray(weights)
    m = np.rint(weights * scale).astype(np.int64)
    heavy = np.flatnonzero(weights == weights.max())
    if points is not None and len(heavy) > 1:
        sub = np.asarray(points)[heavy] + 0.0
        heavy = heavy[np.lexsort(sub.T[::-1])]
    m[int(heavy[0])] += scale - int(m.sum())
    if np.any(m < 0):
        raise SolverFailure("integer mass conversion produced a negative mass")
    return m


def _initial_basis(supply: np.ndarray, demand: np.ndarray):
    """North-west corner rule; always returns exactly n + m - 1 basic cells."""
    n, m = len(supply), len(demand)
    a = supply.copy()
    b = demand.copy()
    flow = {}
    i = j = 0
    while True:
        x = min(a[i], b[j])
        flow[(i, j)] = int(x)
        a[i] -= x
        b[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] == 0:
            i += 1
        else:
            j += 1
    return flow


def _tree_adjacency(basis, n: int, m: int):
    # row nodes 0..n-1, column nodes n..n+m-1
    adj = [[] for _ in range(n + m)]
    for (i, j) in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    return adj


def _duals(basis, cost: np.ndarray, n: int, m: int):
    adj = _tree_adjacency(basis, n, m)
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    queue = deque([0])
    seen = [False] * (n + m)
    seen[0] = True
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            if node < n:
                j = nb - n
                v[j] = cost[node, j] - u[node]
            else:
                u[nb] = cost[nb, node - n] - v[node - n]
            queue.append(nb)
    if not all(seen):
        raise SolverFailure("basis is not a spanning tree")
    return u, v


def _tree_path(basis, n: int, m: int, src: int, dst: int) -> List[int]:
    adj = _tree_adjacency(basis, n, m)
    parent = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    if dst not in parent:
        raise SolverFailure("entering cell does not close a cycle")
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transportation(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray,
                         max_iter: int | None = None):
    """Network simplex for ``min <cost, flow>`` with integer supplies/demands.

    Returns ``(flow, u, v)``: an integer flow matrix and dual potentials with
    ``u_i + v_j = cost_ij`` on the basis and ``u_i + v_j <= cost_ij`` elsewhere
    (up to floating rounding).
    """
    n, m = cost.shape
    if supply.sum() != demand.sum():
        raise SolverFailure("unbalanced transportation problem")
    flow = _initial_basis(supply, demand)
    scale = max(1.0, float(np.abs(cost).max()))
    tol = 1e-13 * scale
    if max_iter is None:
        max_iter = 50 * (n + m) * max(n, m) + 1000
    degenerate_run = 0
    for _ in range(max_iter):
        u, v = _duals(flow, cost, n, m)
        reduced = cost - u[:, None] - v[None, :]
        for (i, j) in flow:
            reduced[i, j] = 0.0
        if reduced.min() >= -tol:
            out = np.zeros((n, m), dtype=np.int64)
            for (i, j), x in flow.items():
                out[i, j] = x
            return out, u, v
        if degenerate_run > 2 * (n + m):
            # Bland-style choice breaks degenerate cycling
            ei, ej = map(int, np.argwhere(reduced < -tol)[0])
        else:
            ei, ej = np.unravel_index(int(np.argmin(reduced)), reduced.shape)
        # the cycle is the tree path column ej -> row ei closed by (ei, ej)
        path = _tree_path(flow, n, m, n + ej, ei)
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((b, a - n) if a >= n else (a, b - n))
        # cells alternate: first loses flow (it shares column ej with the entering cell)
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta))
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        del flow[leaving]
        flow[(int(ei), int(ej))] = int(theta)
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
    raise SolverFailure(f"network simplex did not converge in {max_iter} pivots")


def _check_dims(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions differ: {mu.dim} vs {nu.dim}")


def w1_exact(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Tuple[float, TransportPlan]:
    """Exact ``W1(mu, nu)`` with L1 ground cost, plus the optimal plan and duals."""
    _check_dims(mu, nu)
    cost = l1_cost_matrix(mu.points, nu.points)
    flow, u, v = solve_transportation(integer_masses(mu.weights, points=mu.points),
                                      integer_masses(nu.weights, points=nu.points), cost)
    coupling = flow / MASS_SCALE
    total = float((coupling * cost).sum())
    plan = TransportPlan(coupling, total, u, v)
    return total, plan


def w1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return w1_exact(mu, nu)[0]


def certificate_violations(mu: DiscreteMeasure, nu: DiscreteMeasure, plan: TransportPlan,
                           tol: float = CERT_TOL) -> dict:
    """Largest violation of each optimality condition; all <= tol for a valid plan."""
    cost = l1_cost_matrix(mu.points, nu.points)
    g = plan.coupling
    slack = cost - plan.dual_source[:, None] - plan.dual_target[None, :]
    support = g > 1e-12
    dual_obj = float(plan.dual_source @ mu.weights + plan.dual_target @ nu.weights)
    return {
        "row_sums": float(np.abs(g.sum(axis=1) - mu.weights).max()),
        "col_sums": float(np.abs(g.sum(axis=0) - nu.weights).max()),
        "negative_mass": float(max(0.0, -g.min())),
        "cost": abs(float((g * cost).sum()) - plan.cost),
        "dual_feasibility": float(max(0.0, -slack.min())),
        "complementary_slackness": float(np.abs(slack[support]).max()) if support.any() else 0.0,
        "duality_gap": abs(plan.cost - dual_obj),
    }


def certificate_ok(mu, nu, plan, tol: float = CERT_TOL) -> bool:
    return all(val <= tol for val in certificate_violations(mu, nu, plan, tol).values())


def w1_assignment(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``min_sigma (1/m) sum_s ||x_s - y_sigma(s)||_1`` for equal-size uniform measures."""
    _check_dims(mu, nu)
    if mu.size != nu.size:
        raise UnequalSizes(f"sizes differ: {mu.size} vs {nu.size}")
    if not (mu.is_uniform() and nu.is_uniform()):
        raise NonUniformWeights("assignment formula needs uniform weights")
    cost = l1_cost_matrix(mu.points, nu.points)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / mu.size)


def product_measure(mu: DiscreteMeasure, nu: DiscreteMeasure, cap: int = PRODUCT_CAP) -> DiscreteMeasure:
    """``mu (x) nu`` on R^(d1+d2): Cartesian support, multiplied weights."""
    size = mu.size * nu.size
    if size > cap:
        raise ProductTooLarge(f"product support {size} exceeds cap {cap}")
    pts = np.hstack([np.repeat(mu.points, nu.size, axis=0),
                     np.tile(nu.points, (mu.size, 1))])
    w = np.outer(mu.weights, nu.weights).reshape(-1)
    return DiscreteMeasure(pts, w / w.sum())


def check_tensorization(mu1, mu2, nu1, nu2, cap: int = PRODUCT_CAP, tol: float = CERT_TOL):
    """Return ``(lhs, rhs, holds)`` for ``W1(mu1 x mu2, nu1 x nu2) <= W1(mu1,nu1) + W1(mu2,nu2)``."""
    _check_dims(mu1, nu1)
    _check_dims(mu2, nu2)
    lhs = w1(product_measure(mu1, mu2, cap), product_measure(nu1, nu2, cap))
    rhs = w1(mu1, nu1) + w1(mu2, nu2)
    return lhs, rhs, bool(lhs <= rhs + tol)


__all__ = [
    "TransportPlan", "w1_exact", "w1", "w1_assignment", "check_tensorization",
    "product_measure", "certificate_violations", "certificate_ok", "l1_cost_matrix",
    "integer_masses", "solve_transportation", "MASS_SCALE", "WEIGHT_TOL",
]
