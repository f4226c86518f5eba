"""Interaction potentials, the Boltzmann-Gibbs reweighting, lookup maps and
the Dirac moment projection.

Every Lipschitz semi-norm here is taken with respect to the 1-norm on the
inputs, so it is bounded through the infinity-norm of the gradient.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, KeyCollision, KeyNotFound, PotentialOverflow, ZeroEps
from .measures import Box, DiscreteMeasure, as_points, as_vector, dirac, exact_sum, moment

LOG_OVERFLOW = 700.0
CORNER_DIM_CAP = 20
GAUSSIAN_LIP = math.sqrt(2.0 / math.e)


def _matrix(a, name: str) -> np.ndarray:
    m = np.atleast_2d(np.array(a, dtype=float))
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be a finite matrix")
    m.setflags(write=False)
    return m


# -- potentials ---------------------------------------------------------------

class Potential:
    """Strictly positive interaction potential ``G(x, y) = exp(a(x, y))``."""

    tag = ""
    dim: Optional[int] = None

    def log_eval(self, x: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """``log G(x, y_j)`` for every row ``y_j`` of ``ys``."""
        raise NotImplementedError

    def _check(self, x, ys):
        x = as_vector(x)
        ys = as_points(ys)
        if ys.shape[1] != x.shape[0]:
            raise DimensionMismatch("query and keys differ in dimension")
        if self.dim is not None and x.shape[0] != self.dim:
            raise DimensionMismatch(f"potential expects dim {self.dim}, got {x.shape[0]}")
        return x, ys

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExpDot(Potential):
    """``G(x, y) = exp(scale * <x, y>)``."""

    scale: float = 1.0
    tag = "exp_dot"

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("ExpDot scale must be positive and finite")

    def log_eval(self, x, ys):
        x, ys = self._check(x, ys)
        return self.scale * (ys @ x)

    def to_json(self):
        return {"type": self.tag, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class ScaledDotProjected(Potential):
    """``G(x, y) = exp(<Wq x, Wk y> / sqrt(d'))`` with ``Wq, Wk`` of shape ``(d', d)``."""

    Wq: np.ndarray
    Wk: np.ndarray
    tag = "scaled_dot_projected"

    def __post_init__(self):
        wq = _matrix(self.Wq, "Wq")
        wk = _matrix(self.Wk, "Wk")
        if wq.shape != wk.shape:
            raise DimensionMismatch("Wq and Wk must have the same shape")
        object.__setattr__(self, "Wq", wq)
        object.__setattr__(self, "Wk", wk)

    @property
    def dim(self):
        return self.Wq.shape[1]

    @property
    def bilinear(self) -> np.ndarray:
        """``B`` with ``a(x, y) = x^T B y``."""
        return self.Wq.T @ self.Wk / math.sqrt(self.Wq.shape[0])

    def log_eval(self, x, ys):
        x, ys = self._check(x, ys)
        return (ys @ self.Wk.T) @ (self.Wq @ x) / math.sqrt(self.Wq.shape[0])

    def to_json(self):
        return {"type": self.tag, "Wq": self.Wq.tolist(), "Wk": self.Wk.tolist()}


@dataclass(frozen=True)
class Gaussian(Potential):
    """``G(x, y) = exp(-||x - y||_2^2)``."""

    tag = "gaussian"

    def log_eval(self, x, ys):
        x, ys = self._check(x, ys)
        diff = ys - x
        return -np.einsum("ij,ij->i", diff, diff)

    def to_json(self):
        return {"type": self.tag}


@dataclass(frozen=True)
class Constant(Potential):
    """``G = c``; only useful to probe degenerate regimes of the bounds."""

    c: float = 1.0
    tag = "constant"

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("Constant potential needs c > 0")

    def log_eval(self, x, ys):
        x, ys = self._check(x, ys)
        return np.full(ys.shape[0], math.log(self.c))

    def to_json(self):
        return {"type": self.tag, "c": self.c}


def potential_eval(P: Potential, x, y) -> float:
    """``G(x, y)``; raises :class:`PotentialOverflow` rather than returning inf."""
    logv = float(P.log_eval(x, as_vector(y).reshape(1, -1))[0])
    if logv > LOG_OVERFLOW:
        raise PotentialOverflow(f"log G = {logv:.6g} exceeds {LOG_OVERFLOW}")
    return math.exp(logv)


def potential_from_json(obj: dict) -> Potential:
    kind = obj.get("type")
    if kind == "exp_dot":
        return ExpDot(float(obj.get("scale", 1.0)))
    if kind == "scaled_dot_projected":
        return ScaledDotProjected(obj["Wq"], obj["Wk"])
    if kind == "gaussian":
        return Gaussian()
    if kind == "constant":
        return Constant(float(obj["c"]))
    raise ValueError(f"unknown potential type {kind!r}")


# -- Boltzmann-Gibbs ------------------------------------------------------------

def gibbs_weights(log_potential: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Normalize ``w_i exp(log_potential_i)`` with the max over charged atoms subtracted."""
    log_potential = np.asarray(log_potential, dtype=float)
    charged = weights > 0
    shift = log_potential[charged].max()
    with np.errstate(under="ignore"):
        out = np.where(charged, weights * np.exp(np.minimum(log_potential - shift, 0.0)), 0.0)
    return out / float(exact_sum(out))


def boltzmann_gibbs(P: Potential, x, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Reweight ``nu`` by ``G(x, .)``: ``w_i G(x, k_i) / sum_j w_j G(x, k_j)``."""
    return DiscreteMeasure(nu.points, gibbs_weights(P.log_eval(x, nu.points), nu.weights))


# -- lookup maps ----------------------------------------------------------------

class LookupMap:
    """Deterministic lookup ``l``; the kernel is ``L(x, dy) = delta_{l(x)}(dy)``."""

    tag = ""

    def apply(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self) -> float:
        """Lipschitz constant of ``l`` in the 1-norm."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(LookupMap):
    tag = "identity"

    def apply(self, points):
        return as_points(points)

    def lipschitz(self):
        return 1.0

    def to_json(self):
        return {"type": self.tag}


@dataclass(frozen=True, eq=False)
class Linear(LookupMap):
    """``l(x) = Wv x``."""

    Wv: np.ndarray
    tag = "linear"

    def __post_init__(self):
        object.__setattr__(self, "Wv", _matrix(self.Wv, "Wv"))

    def apply(self, points):
        pts = as_points(points)
        if pts.shape[1] != self.Wv.shape[1]:
            raise DimensionMismatch("Wv does not match the point dimension")
        return pts @ self.Wv.T

    def lipschitz(self):
        # induced 1-norm: largest absolute column sum
        return float(np.abs(self.Wv).sum(axis=0).max())

    def to_json(self):
        return {"type": self.tag, "Wv": self.Wv.tolist()}


@dataclass(frozen=True)
class Scale(LookupMap):
    """``l(x) = alpha x``."""

    alpha: float
    tag = "scale"

    def apply(self, points):
        return self.alpha * as_points(points)

    def lipschitz(self):
        return abs(float(self.alpha))

    def to_json(self):
        return {"type": self.tag, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class Table(LookupMap):
    """Finite table ``keys[i] -> values[i]`` matched on exact coordinates."""

    keys: np.ndarray
    values: np.ndarray
    _index: dict = field(init=False, repr=False)
    tag = "table"

    def __post_init__(self):
        k = as_points(self.keys)
        v = as_points(self.values)
        if k.shape[0] != v.shape[0]:
            raise DimensionMismatch("table needs one value per key")
        index = {}
        for i, row in enumerate(k):
            key = (row + 0.0).tobytes()
            if key in index:
                raise KeyCollision(f"duplicate key {row.tolist()}")
            index[key] = i
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_index", index)

    def apply(self, points):
        pts = as_points(points)
        if pts.shape[1] != self.keys.shape[1]:
            raise DimensionMismatch("lookup point dimension differs from the keys")
        out = np.empty((pts.shape[0], self.values.shape[1]))
        for r, row in enumerate(pts):
            # +0.0 folds -0.0 onto 0.0 so byte keys compare like floats
            i = self._index.get((row + 0.0).tobytes())
            if i is None:
                raise KeyNotFound(f"{row.tolist()} is not a table key")
            out[r] = self.values[i]
        return out

    def lipschitz(self):
        n = self.keys.shape[0]
        if n < 2:
            return 0.0
        dk = np.abs(self.keys[:, None, :] - self.keys[None, :, :]).sum(axis=2)
        dv = np.abs(self.values[:, None, :] - self.values[None, :, :]).sum(axis=2)
        off = ~np.eye(n, dtype=bool)
        return float((dv[off] / dk[off]).max())

    def to_json(self):
        return {"type": self.tag, "keys": self.keys.tolist(), "values": self.values.tolist()}


def lookup_from_json(obj: dict) -> LookupMap:
    kind = obj.get("type")
    if kind == "identity":
        return Identity()
    if kind == "linear":
        return Linear(obj["Wv"])
    if kind == "scale":
        return Scale(float(obj["alpha"]))
    if kind == "table":
        return Table([k for k in obj["keys"]], [v for v in obj["values"]])
    raise ValueError(f"unknown lookup type {kind!r}")


def lookup_push(mu: DiscreteMeasure, L: LookupMap) -> DiscreteMeasure:
    """Pushforward of ``mu`` through ``l``; colliding atoms are kept separate."""
    return DiscreteMeasure(L.apply(mu.points), mu.weights)


def project_dirac(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Moment projection onto Dirac measures: ``delta`` at the mean of ``mu``."""
    return dirac(moment(mu))


# -- regularity constants ---------------------------------------------------------

@dataclass(frozen=True)
class PotentialConstants:
    """Closed-form constants of a potential over ``box x box``.

    ``lip_first`` bounds the Lipschitz semi-norm of ``G(., y)`` uniformly in
    ``y`` and ``lip_second`` that of ``G(x, .)``. ``fallback`` marks bounds
    obtained by interval arithmetic instead of corner enumeration.
    """

    eps_G: float
    sup_G: float
    lip_first: float
    lip_second: float
    log_eps: float
    log_sup: float
    fallback: bool = False

    def require_eps(self) -> float:
        if self.eps_G <= 0.0:
            raise ZeroEps(self.log_eps)
        return self.eps_G


def _interval_abs_max(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.maximum(np.abs(lo), np.abs(hi))


def _bilinear_range(B: np.ndarray, box: Box):
    """min/max of ``x^T B y`` over ``x, y`` in the box, and the fallback flag.

    For fixed ``x`` the optimum over ``y`` splits per coordinate, so only the
    corners of the ``x`` box are enumerated.
    """
    lo, hi = box.lower, box.upper
    d = box.dim
    if d > CORNER_DIM_CAP:
        bound = float(_interval_abs_max(lo, hi) @ np.abs(B) @ _interval_abs_max(lo, hi))
        return -bound, bound, True
    best_max = -np.inf
    best_min = np.inf
    for choice in itertools.product((0, 1), repeat=d):
        x = np.where(np.array(choice, dtype=bool), hi, lo)
        c = x @ B
        best_max = max(best_max, float(np.maximum(c * lo, c * hi).sum()))
        best_min = min(best_min, float(np.minimum(c * lo, c * hi).sum()))
    return best_min, best_max, False


def _gaussian_lip(box: Box) -> float:
    # sup over the box of 2 ||z||_inf exp(-||z||_2^2), z = x - y; attained on one axis
    t = min(1.0 / math.sqrt(2.0), float(box.widths.max()) if box.dim else 0.0)
    return 2.0 * t * math.exp(-t * t)


def potential_constants(P: Potential, box: Box) -> PotentialConstants:
    """``eps_G``, ``sup_G``, ``||G||_{Lip,inf}`` and ``||G||_{inf,Lip}`` on the box."""
    if isinstance(P, Constant):
        lc = math.log(P.c)
        return PotentialConstants(P.c, P.c, 0.0, 0.0, lc, lc)
    if isinstance(P, Gaussian):
        log_eps = -box.diam_l2 ** 2
        lip = _gaussian_lip(box)
        return PotentialConstants(math.exp(log_eps), 1.0, lip, lip, log_eps, 0.0)
    lo, hi = box.lower, box.upper
    if isinstance(P, ExpDot):
        s = P.scale
        prods = np.stack([lo * lo, lo * hi, hi * hi])
        log_sup = s * float(prods.max(axis=0).sum())
        log_eps = s * float(prods.min(axis=0).sum())
        ymax = float(_interval_abs_max(lo, hi).max())
        sup = math.exp(min(log_sup, LOG_OVERFLOW))
        if log_sup > LOG_OVERFLOW:
            raise PotentialOverflow(f"log sup_G = {log_sup:.6g} on this box")
        lip = s * ymax * sup
        return PotentialConstants(math.exp(log_eps), sup, lip, lip, log_eps, log_sup)
    if isinstance(P, ScaledDotProjected):
        if P.dim != box.dim:
            raise DimensionMismatch("box and potential dimensions differ")
        B = P.bilinear
        log_eps, log_sup, fallback = _bilinear_range(B, box)
        if log_sup > LOG_OVERFLOW:
            raise PotentialOverflow(f"log sup_G = {log_sup:.6g} on this box")
        sup = math.exp(log_sup)
        amax = _interval_abs_max(lo, hi)
        # grad_x G = (B y) G and grad_y G = (B^T x) G
        lip_first = float((np.abs(B) @ amax).max()) * sup
        lip_second = float((np.abs(B.T) @ amax).max()) * sup
        return PotentialConstants(math.exp(log_eps), sup, lip_first, lip_second,
                                  log_eps, log_sup, fallback)
    raise TypeError(f"no closed-form constants for {type(P).__name__}")


def sampled_potential_constants(P: Potential, box: Box, n_pairs: int,
                                rng: np.random.Generator, h: float = 1e-6) -> PotentialConstants:
    """Monte Carlo lower estimates of the constants, for auditing the closed forms.

    Lipschitz semi-norms are estimated by central finite differences of the
    gradient, whose infinity-norm is the 1-norm Lipschitz constant.
    """
    d = box.dim
    xs = box.lower + rng.random((n_pairs, d)) * box.widths
    ys = box.lower + rng.random((n_pairs, d)) * box.widths
    logs = np.array([P.log_eval(x, y[None, :])[0] for x, y in zip(xs, ys)])
    eye = np.eye(d) * h
    lip1 = lip2 = 0.0
    for x, y in zip(xs, ys):
        g1 = [(np.exp(P.log_eval(x + e, y[None, :])[0]) - np.exp(P.log_eval(x - e, y[None, :])[0])) / (2 * h)
              for e in eye]
        g2 = [(np.exp(P.log_eval(x, (y + e)[None, :])[0]) - np.exp(P.log_eval(x, (y - e)[None, :])[0])) / (2 * h)
              for e in eye]
        lip1 = max(lip1, float(np.max(np.abs(g1))))
        lip2 = max(lip2, float(np.max(np.abs(g2))))
    return PotentialConstants(float(np.exp(logs.min())), float(np.exp(logs.max())), lip1, lip2,
                              float(logs.min()), float(logs.max()), fallback=False)
