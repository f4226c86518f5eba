"""Neighbourhood mis-specification, the weight-shared fixed-point iteration
and cross-length perturbation of token sequences."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .attention import (AttentionSpec, TransformerSpec, attention_kernel_apply, particle_flow,
                        transformer_step)
from .errors import IndexOutOfRange, TNotInNeighborhood
from .kernels import Gaussian, potential_constants
from .measures import Box, DiscreteMeasure, as_points, bounding_box, dirac, empirical
from .regularity import bound_attention, bound_gaussian_unbounded
from .transport import w1

DECAY_SLACK = 1e-9


def neighborhood_gap(X, t: int, N_idx: Sequence[int], Nhat_idx: Sequence[int],
                     spec: AttentionSpec, box: Optional[Box] = None) -> dict:
    """Output gap of token ``t`` attending over two neighbourhoods, against its bound.

    The bound uses ``||G||_{inf,Lip}`` on the box as the Lipschitz constant of
    ``G(x_t, .)``.
    """
    X = as_points(X)
    n = X.shape[0]
    for idx in (N_idx, Nhat_idx):
        if len(idx) == 0:
            raise ValueError("neighbourhoods must be nonempty")
        if any(i < 0 or i >= n for i in idx):
            raise IndexOutOfRange(f"indices must lie in [0, {n})")
    if not 0 <= t < n:
        raise IndexOutOfRange(f"t must lie in [0, {n})")
    if t not in N_idx or t not in Nhat_idx:
        raise TNotInNeighborhood("both neighbourhoods must contain t")
    mu = empirical(X[list(N_idx)])
    nu = empirical(X[list(Nhat_idx)])
    box = box or bounding_box([empirical(X)])
    x = X[t]
    out1 = attention_kernel_apply(x, mu, spec)
    out2 = attention_kernel_apply(x, nu, spec)
    lhs = float(np.abs(out1 - out2).sum())
    c = potential_constants(spec.potential, box)
    d = X.shape[1]
    dist = w1(mu, nu)
    if c.lip_second == 0.0 or dist == 0.0:
        rhs = 0.0
    else:
        rhs = d * spec.lookup.lipschitz() * 2.0 * c.lip_second * box.diam_l1 / c.require_eps() * dist
    ratio = 0.0 if lhs == 0.0 and rhs == 0.0 else (lhs / rhs if rhs > 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "w1_neighborhoods": dist,
            "lhs_transport": w1(dirac(out1), dirac(out2))}


def composed_bound(tspec: TransformerSpec, box: Box) -> float:
    """``ffn_lip * sum_h ||Wo_h||_1 * tau(A_h)`` on ``box``."""
    d = box.dim
    total = 0.0
    for h in tspec.heads:
        wo = float(np.abs(h.Wo).sum(axis=0).max())
        total += wo * bound_attention(h.spec, box, d).product
    return total * tspec.ffn_lipschitz()


@dataclass
class FixedPointResult:
    final: DiscreteMeasure
    history: List[float]
    converged: bool
    iterations: int
    q: float
    box_ok: bool = True
    decay_ok: Optional[bool] = None
    step_ratios: List[float] = field(default_factory=list)


def default_box(mu: DiscreteMeasure, padding: float = 0.0) -> Box:
    """Bounding box of the support and the origin."""
    return bounding_box([mu], padding, extra_points=np.zeros((1, mu.dim)))


def fixed_point_iterate(mu0: DiscreteMeasure, tspec: TransformerSpec, tol: float = 1e-8,
                        max_iter: int = 500, box: Optional[Box] = None) -> FixedPointResult:
    """Iterate ``mu -> transformer_step(mu)`` until consecutive iterates are ``tol``-close in W1.

    ``q`` is the composed contraction bound on ``box``. When ``q < 1`` and
    every iterate stays inside ``box``, ``decay_ok`` records whether each
    step distance is at most ``q`` times the previous one.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    box = box or default_box(mu0)
    q = composed_bound(tspec, box)
    box_ok = box.contains(mu0.points, 1e-12)
    history: List[float] = []
    mu = mu0
    converged = False
    for _ in range(max_iter):
        nxt = transformer_step(mu, tspec)
        box_ok = box_ok and box.contains(nxt.points, 1e-12)
        history.append(w1(nxt, mu))
        mu = nxt
        if history[-1] <= tol:
            converged = True
            break
    ratios = [b / a for a, b in zip(history, history[1:]) if a > 0]
    decay_ok = None
    if q < 1 and box_ok:
        decay_ok = all(b <= q * a + DECAY_SLACK for a, b in zip(history, history[1:]))
    return FixedPointResult(mu, history, converged, len(history), q, box_ok, decay_ok, ratios)


def contractive_scale(spec_potential, box: Box, target_q: float = 0.5) -> float:
    """Lookup scale ``alpha`` giving a single identity-head layer the bound ``target_q``."""
    from .kernels import Identity
    raw = bound_attention(AttentionSpec(spec_potential, Identity()), box, box.dim).product
    return target_q / raw if raw > 0 else 1.0


def sequence_perturbation(A, B, tspec: TransformerSpec, depth: int) -> dict:
    """W1 between two token sequences before and after ``depth`` transformer steps.

    For a single Gaussian head with ``Wo = I`` and no feedforward map, the
    per-step unbounded constant raised to ``depth`` is reported as ``bound``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    mA, mB = empirical(A), empirical(B)
    input_w1 = w1(mA, mB)
    out_a = particle_flow(mA, tspec, depth)[-1]
    out_b = particle_flow(mB, tspec, depth)[-1]
    output_w1 = w1(out_a, out_b)
    defined = input_w1 >= 1e-12
    amp = output_w1 / input_w1 if defined else None
    bound = None
    if (len(tspec.heads) == 1 and not tspec.ffn and isinstance(tspec.heads[0].spec.potential, Gaussian)
            and np.array_equal(tspec.heads[0].Wo, np.eye(mA.dim))):
        step = bound_gaussian_unbounded(mA.size, mB.size, mA.dim, tspec.heads[0].spec.lookup.lipschitz())
        bound = step ** depth
    return {"input_w1": input_w1, "output_w1": output_w1, "amplification": amp,
            "amplification_defined": defined, "bound": bound}


def negate_token(A, index: int) -> np.ndarray:
    """Copy of ``A`` with one embedding sign-flipped."""
    out = as_points(A).copy()
    out[index] = -out[index]
    return out
