"""Finitely supported probability measures on R^d.

Atoms are never merged: an empirical measure of ``n`` points always has
``n`` atoms, each of mass ``1/n``, even when points repeat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidMeasure

WEIGHT_TOL = 1e-12


def as_vector(x) -> np.ndarray:
    v = np.array(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector coordinates must be finite")
    return v


def as_points(points) -> np.ndarray:
    """Coerce a point list to a float array of shape ``(n, d)``."""
    try:
        arr = np.array(points, dtype=float)
    except ValueError as exc:  # ragged input
        raise DimensionMismatch("points do not share one dimension") from exc
    if arr.size == 0:
        raise EmptyInput("at least one point is required")
    if arr.ndim == 1:
        # a flat list of scalars is a list of 1-d points
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a list of vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def exact_sum(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Correctly rounded sum along ``axis``; the result does not depend on atom order."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return np.float64(math.fsum(a))
    return np.apply_along_axis(math.fsum, axis, a)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A probability measure ``sum_i w_i delta_{x_i}``.

    ``points`` has shape ``(n, d)`` and ``weights`` shape ``(n,)``. Weights
    within ``1e-12`` of summing to one are renormalized; anything further
    off is rejected. Weights already within rounding of one are kept as given,
    so normalizing is idempotent.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise DimensionMismatch(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(w)):
            raise InvalidMeasure("weights must be finite")
        if np.any(w < 0):
            raise InvalidMeasure("weights must be nonnegative")
        total = float(exact_sum(w))
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure(f"weights sum to {total!r}, not 1")
        if abs(total - 1.0) > w.shape[0] * np.finfo(float).eps:
            w = w / total
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def is_uniform(self, tol: float = WEIGHT_TOL) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.size) <= tol))

    def with_points(self, points) -> "DiscreteMeasure":
        """Same weights, atoms moved to ``points`` (one new point per atom)."""
        pts = as_points(points)
        if pts.shape[0] != self.size:
            raise DimensionMismatch("one new point per atom is required")
        return DiscreteMeasure(pts, self.weights)

    def permuted(self, perm: Sequence[int]) -> "DiscreteMeasure":
        perm = np.asarray(perm)
        return DiscreteMeasure(self.points[perm], self.weights[perm])

    def __repr__(self) -> str:
        return f"DiscreteMeasure(size={self.size}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box ``[lower, upper]``, the compact domain of the bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower)
        hi = as_vector(self.upper)
        if lo.shape != hi.shape:
            raise DimensionMismatch("lower and upper differ in dimension")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diam_l1(self) -> float:
        return float(self.widths.sum())

    @property
    def diam_l2(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, points, tol: float = 0.0) -> bool:
        pts = as_points(points)
        return bool(np.all(pts >= self.lower - tol) and np.all(pts <= self.upper + tol))

    def union(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper))


def dirac(x) -> DiscreteMeasure:
    return DiscreteMeasure(as_vector(x).reshape(1, -1), [1.0])


def empirical(points) -> DiscreteMeasure:
    """Uniform measure ``(1/n) sum_t delta_{x_t}``; duplicates stay distinct atoms."""
    pts = as_points(points)
    n = pts.shape[0]
    return DiscreteMeasure(pts, np.full(n, 1.0 / n))


def mixture(mu: DiscreteMeasure, nu: DiscreteMeasure, alpha: float) -> DiscreteMeasure:
    """``alpha*mu + (1-alpha)*nu`` as the concatenation of both atom lists."""
    if mu.dim != nu.dim:
        raise DimensionMismatch("mixture of measures in different dimensions")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    pts = np.vstack([mu.points, nu.points])
    w = np.concatenate([alpha * mu.weights, (1.0 - alpha) * nu.weights])
    return DiscreteMeasure(pts, w)


def moment(mu: DiscreteMeasure, A=None, b=None) -> np.ndarray:
    """``mu(F)`` for ``F(x) = A x + b``; the identity feature map when both are None."""
    feats = mu.points
    if A is not None:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != mu.dim:
            raise DimensionMismatch(f"A has {A.shape[1]} columns, points have dim {mu.dim}")
        feats = feats @ A.T
    if b is not None:
        b = np.asarray(b, dtype=float).reshape(-1)
        if b.shape[0] != feats.shape[1]:
            raise DimensionMismatch("offset b does not match the feature dimension")
        feats = feats + b
    return exact_sum(mu.weights[:, None] * feats, axis=0)


def gaussian_convolve_moment(mu: DiscreteMeasure, sigma: float) -> np.ndarray:
    """Mean of ``N(0, sigma^2 I) * mu``.

    The noise has zero mean, so the convolution keeps the mean of ``mu``;
    the value is computed as ``mu(id) + rho_sigma(id)`` with the noise term
    written out explicitly.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    noise_mean = np.zeros(mu.dim)
    return moment(mu) + noise_mean


def sample_convolved(mu: DiscreteMeasure, sigma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` samples from ``N(0, sigma^2 I) * mu``."""
    idx = rng.choice(mu.size, size=n, p=mu.weights)
    return mu.points[idx] + sigma * rng.standard_normal((n, mu.dim))


def bounding_box(measures: Sequence[DiscreteMeasure], padding: float = 0.0,
                 extra_points: Optional[np.ndarray] = None) -> Box:
    """Smallest box containing every support point, grown by ``padding`` per side."""
    if padding < 0:
        raise ValueError("padding must be nonnegative")
    blocks = [m.points for m in measures]
    if extra_points is not None:
        blocks.append(as_points(extra_points))
    if not blocks:
        raise EmptyInput("bounding_box needs at least one measure")
    dims = {b.shape[1] for b in blocks}
    if len(dims) != 1:
        raise DimensionMismatch("measures live in different dimensions")
    pts = np.vstack(blocks)
    return Box(pts.min(axis=0) - padding, pts.max(axis=0) + padding)
