"""Attention and the Transformer encoder as transport of discrete measures.

Two independent routes are provided. The *classical* route is plain matrix
algebra (scores, softmax, weighted sums of values). The *kernel* route
reweights the key measure with the potential, pushes it through the lookup
map and collapses the result to its mean. The two are checked against
each other in the tests.

Layer normalization and residual connections are not modelled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.special import softmax

from .errors import DimensionMismatch, KeyCollision
from .kernels import (Constant, ExpDot, Gaussian, Identity, LookupMap, Potential,
                      ScaledDotProjected, Table, boltzmann_gibbs, lookup_from_json,
                      lookup_push, potential_from_json, project_dirac)
from .measures import DiscreteMeasure, as_points, as_vector, empirical

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class AttentionSpec:
    potential: Potential
    lookup: LookupMap = field(default_factory=Identity)

    def to_json(self) -> dict:
        return {"potential": self.potential.to_json(), "lookup": self.lookup.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "AttentionSpec":
        return cls(potential_from_json(obj["potential"]),
                   lookup_from_json(obj.get("lookup", {"type": "identity"})))


@dataclass(frozen=True, eq=False)
class Head:
    spec: AttentionSpec
    Wo: np.ndarray

    def __post_init__(self):
        wo = np.atleast_2d(np.array(self.Wo, dtype=float))
        wo.setflags(write=False)
        object.__setattr__(self, "Wo", wo)


@dataclass(frozen=True, eq=False)
class FFNLayer:
    """One layer ``x -> act(W x + b)``."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.weight, dtype=float))
        b = np.array(self.bias, dtype=float).reshape(-1)
        if b.shape[0] != w.shape[0]:
            raise DimensionMismatch("bias length must equal the number of weight rows")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        z = pts @ self.weight.T + self.bias
        return np.maximum(z, 0.0) if self.activation == "relu" else z


@dataclass(frozen=True)
class TransformerSpec:
    """Multi-head self-attention followed by a pointwise feedforward map.

    Head outputs combine as ``sum_h Wo_h @ y_h`` (column-vector convention).
    An empty ``ffn`` is the identity map.
    """

    heads: tuple
    ffn: tuple = ()

    def __post_init__(self):
        heads = tuple(self.heads)
        if not heads:
            raise ValueError("a transformer needs at least one head")
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "ffn", tuple(self.ffn))

    @classmethod
    def single(cls, spec: AttentionSpec, dim: int, ffn: Sequence[FFNLayer] = ()) -> "TransformerSpec":
        return cls((Head(spec, np.eye(dim)),), tuple(ffn))

    def ffn_apply(self, pts: np.ndarray) -> np.ndarray:
        for layer in self.ffn:
            pts = layer(pts)
        return pts

    def ffn_lipschitz(self) -> float:
        """Product of induced 1-norms; relu is 1-Lipschitz."""
        lip = 1.0
        for layer in self.ffn:
            lip *= float(np.abs(layer.weight).sum(axis=0).max())
        return lip

    def to_json(self) -> dict:
        return {
            "heads": [{"attention": h.spec.to_json(), "Wo": h.Wo.tolist()} for h in self.heads],
            "ffn": [{"weight": l.weight.tolist(), "bias": l.bias.tolist(), "activation": l.activation}
                    for l in self.ffn],
        }

    @classmethod
    def from_json(cls, obj: dict, dim: int | None = None) -> "TransformerSpec":
        """Parse a transformer spec; a bare attention spec becomes one head with ``Wo = I``."""
        if "heads" not in obj:
            if dim is None:
                raise ValueError("dimension needed to wrap an attention spec")
            return cls.single(AttentionSpec.from_json(obj), dim)
        heads = tuple(Head(AttentionSpec.from_json(h["attention"]), h["Wo"]) for h in obj["heads"])
        ffn = tuple(FFNLayer(l["weight"], l["bias"], l.get("activation", "identity"))
                    for l in obj.get("ffn", []))
        return cls(heads, ffn)


# -- classical matrix route ----------------------------------------------------

def attention_scores(Q: np.ndarray, K: np.ndarray, potential: Potential) -> np.ndarray:
    """Score matrix ``a(q_i, k_j)`` written directly in matrix form."""
    if isinstance(potential, ExpDot):
        return potential.scale * (Q @ K.T)
    if isinstance(potential, ScaledDotProjected):
        dproj = potential.Wq.shape[0]
        return (Q @ potential.Wq.T) @ (K @ potential.Wk.T).T / math.sqrt(dproj)
    if isinstance(potential, Gaussian):
        sq = (Q * Q).sum(1)[:, None] + (K * K).sum(1)[None, :] - 2.0 * Q @ K.T
        return -sq
    if isinstance(potential, Constant):
        return np.full((Q.shape[0], K.shape[0]), math.log(potential.c))
    raise TypeError(f"unsupported potential {type(potential).__name__}")


def attention_classical(Q, K, V, spec: AttentionSpec) -> np.ndarray:
    """``sum_i softmax_i(a(q, k_i)) l(v_i)`` for every query row of ``Q``."""
    Q, K, V = as_points(Q), as_points(K), as_points(V)
    if K.shape[0] != V.shape[0]:
        raise DimensionMismatch("keys and values must have the same count")
    if Q.shape[1] != K.shape[1]:
        raise DimensionMismatch("queries and keys differ in dimension")
    if isinstance(spec.lookup, Table) and len({row.tobytes() for row in K + 0.0}) < K.shape[0]:
        raise KeyCollision("duplicate keys with a table lookup")
    P = softmax(attention_scores(Q, K, spec.potential), axis=1)
    return P @ spec.lookup.apply(V)


def transformer_classical(X, tspec: TransformerSpec) -> np.ndarray:
    """Matrix route for one transformer layer: concat heads, multiply by stacked ``Wo``."""
    X = as_points(X)
    outs = [attention_classical(X, X, X, h.spec) for h in tspec.heads]
    concat = np.hstack(outs)
    stacked = np.hstack([h.Wo for h in tspec.heads])
    return tspec.ffn_apply(concat @ stacked.T)


# -- measure-kernel route ------------------------------------------------------

def attention_kernel_measure(q, keys: DiscreteMeasure, spec: AttentionSpec) -> DiscreteMeasure:
    """``Pi[Psi_G(q, .)(keys) L]`` as a one-atom measure."""
    return project_dirac(lookup_push(boltzmann_gibbs(spec.potential, q, keys), spec.lookup))


def attention_kernel_apply(q, keys: DiscreteMeasure, spec: AttentionSpec) -> np.ndarray:
    return attention_kernel_measure(q, keys, spec).points[0].copy()


def attention_via_kernel(Q, K, V, spec: AttentionSpec) -> np.ndarray:
    """Kernel route for general ``(Q, K, V)``: the lookup becomes the table ``k_i -> l(v_i)``."""
    Q, K, V = as_points(Q), as_points(K), as_points(V)
    if K.shape[0] != V.shape[0]:
        raise DimensionMismatch("keys and values must have the same count")
    table = Table(K, spec.lookup.apply(V))
    kspec = AttentionSpec(spec.potential, table)
    keys = empirical(K)
    return np.array([attention_kernel_apply(q, keys, kspec) for q in Q])


def self_attention_step(mu: DiscreteMeasure, spec: AttentionSpec) -> DiscreteMeasure:
    """``mu -> mu A_mu``: every atom is replaced by its attention output; weights kept."""
    out = np.array([attention_kernel_apply(x, mu, spec) for x in mu.points])
    return DiscreteMeasure(out, mu.weights)


def _head_outputs(mu: DiscreteMeasure, tspec: TransformerSpec) -> List[np.ndarray]:
    return [np.array([attention_kernel_apply(x, mu, h.spec) for x in mu.points]) for h in tspec.heads]


def transformer_step(mu: DiscreteMeasure, tspec: TransformerSpec) -> DiscreteMeasure:
    ys = _head_outputs(mu, tspec)
    dims = {h.Wo.shape[0] for h in tspec.heads}
    if len(dims) != 1:
        raise DimensionMismatch("heads map to different output dimensions")
    combined = sum(y @ h.Wo.T for y, h in zip(ys, tspec.heads))
    return DiscreteMeasure(tspec.ffn_apply(combined), mu.weights)


def multihead_mixture_point(x, mu: DiscreteMeasure, tspec: TransformerSpec) -> np.ndarray:
    """Multi-head output built literally as the projection of a head mixture.

    Each head contributes an atom at ``H * Wo_h y_h`` with mass ``1/H``; the
    moment projection of that mixture is the combined output.
    """
    H = len(tspec.heads)
    atoms = np.array([H * (h.Wo @ attention_kernel_apply(x, mu, h.spec)) for h in tspec.heads])
    mix = DiscreteMeasure(atoms, np.full(H, 1.0 / H))
    return project_dirac(mix).points[0]


def particle_flow(mu0: DiscreteMeasure, tspec: TransformerSpec, depth: int) -> List[DiscreteMeasure]:
    """Trajectory ``[mu^0, ..., mu^depth]`` of repeated transformer steps."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    traj = [mu0]
    for _ in range(depth):
        traj.append(transformer_step(traj[-1], tspec))
    return traj


def stochastic_matrix_attention(Q, K, V, potential: Potential | None = None) -> np.ndarray:
    """Attention on the index space ``{1..N}``: ``softmax(scores) @ I @ V``.

    Measures are stochastic vectors and kernels stochastic matrices, so the
    lookup is the ``N x N`` identity and the projection is a product with ``V``.
    """
    potential = potential or ExpDot(1.0)
    Q, K, V = as_points(Q), as_points(K), as_points(V)
    n = K.shape[0]
    scores = attention_scores(Q, K, potential)
    G = np.exp(scores - scores.max(axis=1, keepdims=True))
    uniform = np.full(n, 1.0 / n)
    kernel = G * uniform
    kernel /= kernel.sum(axis=1, keepdims=True)
    lookup = np.eye(n)
    return kernel @ lookup @ V


def discrete_recovery_check(Q, K, V, potential: Potential | None = None) -> float:
    """Largest coordinate gap between the stochastic-matrix and kernel routes."""
    potential = potential or ExpDot(1.0)
    a = stochastic_matrix_attention(Q, K, V, potential)
    b = attention_via_kernel(Q, K, V, AttentionSpec(potential, Identity()))
    return float(np.abs(a - b).max())


def random_recovery_instance(seed: int, n: int = 5, d: int = 4):
    """Seeded ``(Q, K, V)`` with ``n`` rows each in ``R^d``."""
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.normal(size=(n, d)), rng.normal(size=(n, d))
