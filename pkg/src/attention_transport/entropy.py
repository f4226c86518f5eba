"""Relative entropy, the maximum-entropy reweighting and KL projections.

Measures compared here share one explicit support list, so absolute
continuity is decided by index rather than by floating-point matching.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from .errors import (DegenerateGrid, DimensionMismatch, Infeasible, MaxIterExceeded,
                     NoFeasibleSamples, SampleBudgetTooSmall, SupportMismatch)
from .kernels import gibbs_weights
from .measures import DiscreteMeasure, as_points, as_vector, moment

HULL_MARGIN = 1e-9


# -- KL and entropy ---------------------------------------------------------------

def kl_weights(p: np.ndarray, q: np.ndarray) -> float:
    """``sum_i p_i log(p_i / q_i)`` with ``0 log 0 = 0``; inf when ``p`` is not << ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))


def _same_support(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.points.shape != nu.points.shape or not np.array_equal(mu.points, nu.points):
        raise SupportMismatch("measures must be expressed over one common support list")


def kl(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    _same_support(mu, nu)
    return kl_weights(mu.weights, nu.weights)


def entropy_functional(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``H_nu(mu) = -KL(mu || nu)``; ``-inf`` off the absolutely continuous cone."""
    return -kl(mu, nu)


# -- maximum entropy -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaxEntProblem:
    """Maximize ``H_nu(mu)`` subject to ``sum_j mu_j k_j = target``.

    ``features`` is ``l x N``: column ``j`` is the feature vector of atom ``j``
    of ``base`` for the fixed query.
    """

    base: DiscreteMeasure
    features: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.array(self.features, dtype=float))
        t = as_vector(self.target)
        if K.shape[1] != self.base.size:
            raise DimensionMismatch(f"features have {K.shape[1]} columns, base has {self.base.size} atoms")
        if K.shape[0] != t.shape[0]:
            raise DimensionMismatch("target length differs from the number of features")
        if not np.all(np.isfinite(K)):
            raise ValueError("features must be finite")
        K.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "features", K)
        object.__setattr__(self, "target", t)

    def hull_margin(self) -> float:
        """Largest ``m`` such that ``target`` is a convex combination of the
        supported feature columns with every coefficient ``>= m``."""
        support = np.flatnonzero(self.base.weights > 0)
        K = self.features[:, support]
        n = K.shape[1]
        # variables (w_1..w_n, m); maximize m
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_eq = np.zeros((K.shape[0] + 1, n + 1))
        A_eq[:-1, :n] = K
        A_eq[-1, :n] = 1.0
        b_eq = np.concatenate([self.target, [1.0]])
        A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * n + [(None, 1.0)], method="highs")
        if res.status != 0:
            return -math.inf
        return float(res.x[-1])

    def check_feasible(self, margin: float = HULL_MARGIN):
        m = self.hull_margin()
        if not m > margin:
            raise Infeasible(f"target is not strictly inside the feature hull (margin {m:.3g})")


@dataclass
class MaxEntResult:
    lam: np.ndarray
    solution: DiscreteMeasure
    iterations: int
    converged: bool
    grad_norm: float
    dual_values: List[float] = field(default_factory=list)
    regularized: bool = False


def gibbs_from_lambda(problem: MaxEntProblem, lam: np.ndarray) -> np.ndarray:
    return gibbs_weights(lam @ problem.features, problem.base.weights)


def _dual(problem: MaxEntProblem, lam: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        logw = np.log(problem.base.weights)
    return float(logsumexp(logw + lam @ problem.features) - lam @ problem.target)


def maxent_solve(problem: MaxEntProblem, tol: float = 1e-10, max_iter: int = 100,
                 check: bool = True, raise_on_maxiter: bool = False) -> MaxEntResult:
    """Newton's method on the convex dual ``log sum_j nu_j exp<lam, k_j> - <lam, f>``.

    Starts at ``lam = 0`` with an Armijo backtracking line search. A singular
    Hessian (affinely dependent features) falls back to a least-squares
    Newton step and sets ``regularized``.
    """
    if check:
        problem.check_feasible()
    K = problem.features
    lam = np.zeros(K.shape[0])
    values = [_dual(problem, lam)]
    regularized = False
    it = 0
    for it in range(1, max_iter + 1):
        p = gibbs_from_lambda(problem, lam)
        mean = K @ p
        grad = mean - problem.target
        gnorm = float(np.abs(grad).max())
        if gnorm <= tol:
            it -= 1
            break
        centered = K - mean[:, None]
        hess = (centered * p) @ centered.T
        try:
            if np.linalg.cond(hess) > 1e12:
                raise np.linalg.LinAlgError
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            regularized = True
            step = -np.linalg.lstsq(hess, grad, rcond=1e-12)[0]
        t = 1.0
        slope = float(grad @ step)
        # below the rounding level of phi the line search is blind; Newton is already local
        if -slope > 1e-13 * max(1.0, abs(values[-1])):
            while t > 1e-12:
                if _dual(problem, lam + t * step) <= values[-1] + 1e-4 * t * slope:
                    break
                t *= 0.5
        lam = lam + t * step
        values.append(_dual(problem, lam))
    p = gibbs_from_lambda(problem, lam)
    gnorm = float(np.abs(problem.features @ p - problem.target).max())
    converged = gnorm <= tol
    if not converged and raise_on_maxiter:
        raise MaxIterExceeded(f"maxent Newton stopped at gradient {gnorm:.3g}")
    return MaxEntResult(lam, DiscreteMeasure(problem.base.points, p), it, converged,
                        gnorm, values, regularized)


@dataclass
class MaxEntVerification:
    holds: bool
    worst_gap: float
    n_accepted: int
    n_rejected: int
    identity_error: float
    n_shrunk: int = 0


def feasible_samples(problem: MaxEntProblem, n_samples: int, rng: np.random.Generator,
                     max_attempts: Optional[int] = None, anchor: Optional[np.ndarray] = None):
    """Random reweightings of ``nu`` projected onto the constraint set.

    The projection is the least-squares correction onto ``{w : K w = f,
    sum w = 1}``. A projection with a negative entry is rejected, unless a
    strictly positive feasible ``anchor`` is given: then it is pulled toward
    the anchor by a random fraction of the largest step that keeps every
    weight nonnegative. Returns ``(samples, n_rejected, n_shrunk)``.
    """
    support = np.flatnonzero(problem.base.weights > 0)
    K = problem.features[:, support]
    A = np.vstack([K, np.ones(len(support))])
    c = np.concatenate([problem.target, [1.0]])
    A_pinv = np.linalg.pinv(A)
    base = problem.base.weights[support]
    a = None if anchor is None else np.asarray(anchor, dtype=float)[support]
    if a is not None and not np.all(a > 0):
        a = None  # an underflowed anchor cannot absorb the shrink step
    max_attempts = max_attempts or 50 * n_samples
    out = []
    attempts = shrunk = 0
    while len(out) < n_samples and attempts < max_attempts:
        attempts += 1
        spread = math.exp(rng.uniform(math.log(1e-3), math.log(3.0)))
        r = base * np.exp(spread * rng.standard_normal(len(support)))
        r /= r.sum()
        w = r - A_pinv @ (A @ r - c)
        if np.any(w < 0):
            if a is None:
                continue
            step = w - a
            neg = step < 0
            s_max = float(np.min(a[neg] / -step[neg]))
            w = a + rng.uniform(0.0, 1.0) * min(1.0, s_max) * step
            w = np.maximum(w, 0.0)
            shrunk += 1
        full = np.zeros(problem.base.size)
        full[support] = w
        out.append(full)
    return out, attempts - len(out), shrunk


def maxent_verify(problem: MaxEntProblem, solution: DiscreteMeasure, n_samples: int,
                  seed: int, slack: float = 1e-9) -> MaxEntVerification:
    """Check ``H_nu(gamma) <= H_nu(mu*)`` on sampled feasible ``gamma``.

    Also recomputes both sides of ``H_nu(gamma) = -KL(gamma || mu*) + H_nu(mu*)``
    for every sample and reports the largest discrepancy.
    """
    rng = np.random.default_rng(seed)
    samples, rejected, shrunk = feasible_samples(problem, n_samples, rng, anchor=solution.weights)
    if not samples:
        raise NoFeasibleSamples("no sampled reweighting satisfied the constraints")
    nu = problem.base.weights
    h_star = -kl_weights(solution.weights, nu)
    worst = -math.inf
    ident = 0.0
    for w in samples:
        h = -kl_weights(w, nu)
        worst = max(worst, h - h_star)
        ident = max(ident, abs(h - (-kl_weights(w, solution.weights) + h_star)))
    return MaxEntVerification(bool(worst <= slack), float(worst), len(samples),
                              rejected, float(ident), shrunk)


# -- exponential family projection ---------------------------------------------------

@dataclass
class ExpFamProjection:
    theta: np.ndarray
    projected: DiscreteMeasure
    iterations: int
    converged: bool


def _grid_index(grid: np.ndarray, mu: DiscreteMeasure) -> np.ndarray:
    """Weights of ``mu`` expressed on ``grid`` (exact coordinate match)."""
    lookup = {(row + 0.0).tobytes(): i for i, row in enumerate(grid)}
    w = np.zeros(grid.shape[0])
    for pt, wt in zip(mu.points, mu.weights):
        i = lookup.get((pt + 0.0).tobytes())
        if i is None:
            raise SupportMismatch(f"{pt.tolist()} is not a grid point")
        w[i] += wt
    return w


def expfam_log_density(grid: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``<theta, x> - A(theta)`` on every grid point (counting base measure)."""
    s = grid @ theta
    return s - logsumexp(s)


def expfam_member(grid, theta) -> DiscreteMeasure:
    grid = as_points(grid)
    return DiscreteMeasure(grid, np.exp(expfam_log_density(grid, as_vector(theta))))


def expfam_project(mu: DiscreteMeasure, grid, tol: float = 1e-12, max_iter: int = 200) -> ExpFamProjection:
    """KL projection of ``mu`` onto ``{exp(<theta, x> - A(theta))}`` over ``grid``.

    Solves the moment-matching equation ``nu_theta(x) = mu(x)`` by Newton's
    method on ``A(theta) - <theta, mu(x)>``.
    """
    grid = as_points(grid)
    if grid.shape[1] != mu.dim:
        raise DimensionMismatch("grid and measure dimensions differ")
    centered = grid - grid.mean(axis=0)
    if np.linalg.matrix_rank(centered) < grid.shape[1]:
        raise DegenerateGrid("grid does not span the full dimension")
    w = _grid_index(grid, mu)
    target = w @ grid
    theta = np.zeros(grid.shape[1])

    def objective(th):
        return float(logsumexp(grid @ th) - th @ target)

    current = objective(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = np.exp(expfam_log_density(grid, theta))
        mean = p @ grid
        grad = mean - target
        if np.abs(grad).max() <= tol:
            converged = True
            it -= 1
            break
        c = grid - mean
        hess = (c.T * p) @ c
        step = -np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-14:
            cand = theta + t * step
            val = objective(cand)
            if val <= current + 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        theta = theta + t * step
        current = objective(theta)
    if not converged:
        p = np.exp(expfam_log_density(grid, theta))
        if np.abs(p @ grid - target).max() > 1e-9:
            raise MaxIterExceeded("moment matching did not converge; is the mean on the hull boundary?")
        converged = True
    return ExpFamProjection(theta, expfam_member(grid, theta), it, converged)


def kl_to_family(mu: DiscreteMeasure, grid, theta) -> float:
    grid = as_points(grid)
    w = _grid_index(grid, mu)
    return kl_weights(w, np.exp(expfam_log_density(grid, as_vector(theta))))


def theta_grid_check(mu: DiscreteMeasure, grid, theta, radius: float = 1.0,
                     n_points: int = 41, n_directions: int = 8, seed: int = 0):
    """Compare ``KL(mu || nu_theta)`` at ``theta`` with a line grid around it.

    The grid has ``n_points`` values along each coordinate axis and along
    ``n_directions`` random unit directions. Returns ``(best_gap, n_evaluated)``
    where ``best_gap = min_grid KL - KL(theta)``; a projection passes when the
    gap is ``>= -1e-9``.
    """
    theta = as_vector(theta)
    d = theta.shape[0]
    rng = np.random.default_rng(seed)
    dirs = [e for e in np.eye(d)]
    for _ in range(n_directions if d > 1 else 0):
        v = rng.standard_normal(d)
        dirs.append(v / np.linalg.norm(v))
    base = kl_to_family(mu, grid, theta)
    best = math.inf
    count = 0
    for direction in dirs:
        for s in np.linspace(-radius, radius, n_points):
            best = min(best, kl_to_family(mu, grid, theta + s * direction) - base)
            count += 1
    return float(best), count


# -- smoothed Dirac projection ---------------------------------------------------------

@dataclass(frozen=True)
class SmoothedEstimate:
    sigma: float
    argmin_estimate: np.ndarray
    distance_to_mean: float
    stderr: float
    kl_at_min: float


def _mixture_logpdf(z: np.ndarray, mu: DiscreteMeasure, sigma: float) -> np.ndarray:
    d = mu.dim
    sq = ((z[:, None, :] - mu.points[None, :, :]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore"):
        logw = np.log(mu.weights)
    norm = -0.5 * d * math.log(2 * math.pi * sigma * sigma)
    return logsumexp(logw[None, :] - sq / (2 * sigma * sigma), axis=1) + norm


def _gauss_logpdf(z: np.ndarray, x: np.ndarray, sigma: float) -> np.ndarray:
    d = z.shape[1]
    sq = ((z - x) ** 2).sum(axis=1)
    return -sq / (2 * sigma * sigma) - 0.5 * d * math.log(2 * math.pi * sigma * sigma)


def smoothed_projection_experiment(mu: DiscreteMeasure, sigmas: Sequence[float], n_samples: int,
                                   seed: int) -> List[SmoothedEstimate]:
    """Minimize a Monte Carlo estimate of ``KL(rho_sigma * mu || N(x, sigma^2 I))`` over ``x``.

    For each ``sigma`` the KL is estimated from ``n_samples`` draws of the
    smoothed measure (the mixture density is evaluated exactly) and minimized
    by BFGS from the origin. ``stderr`` is the Monte Carlo standard error of
    the estimated minimizer, measured in the 1-norm.
    """
    if n_samples < 10_000:
        raise SampleBudgetTooSmall("at least 10^4 samples per sigma are required")
    sig = [float(s) for s in sigmas]
    if any(s <= 0 for s in sig) or any(b >= a for a, b in zip(sig, sig[1:])):
        raise ValueError("sigmas must be positive and strictly decreasing")
    rng = np.random.Generator(np.random.Philox(seed))
    mean = moment(mu)
    out = []
    for sigma in sig:
        idx = rng.choice(mu.size, size=n_samples, p=mu.weights)
        z = mu.points[idx] + sigma * rng.standard_normal((n_samples, mu.dim))
        log_p = _mixture_logpdf(z, mu, sigma)

        def objective(x):
            return float(np.mean(log_p - _gauss_logpdf(z, x, sigma)))

        def gradient(x):
            return -(z - x).mean(axis=0) / (sigma * sigma)

        res = minimize(objective, np.zeros(mu.dim), jac=gradient, method="BFGS",
                       options={"gtol": 1e-12})
        x_hat = res.x
        se = float(np.sqrt(z.var(axis=0, ddof=1) / n_samples).sum())
        out.append(SmoothedEstimate(sigma, x_hat, float(np.abs(x_hat - mean).sum()), se,
                                    float(res.fun)))
    return out


def smoothed_contract(estimates: Sequence[SmoothedEstimate], tolerance: float) -> bool:
    """Distances to the mean never grow beyond 3 standard errors and the last is within ``tolerance``."""
    for a, b in zip(estimates, estimates[1:]):
        if b.distance_to_mean > a.distance_to_mean + 3.0 * max(a.stderr, b.stderr):
            return False
    return estimates[-1].distance_to_mean <= tolerance
