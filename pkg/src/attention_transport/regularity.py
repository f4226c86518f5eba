"""Closed-form contraction constants and their empirical audits.

Every theoretical constant is composed from :func:`potential_constants`, so
the audits exercise the bounds themselves rather than re-derived numbers.
Empirical suprema come from seeded random pairs followed by hill climbing
from the worst pair; they are lower estimates of the true supremum.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .attention import AttentionSpec, attention_kernel_apply, self_attention_step
from .errors import AllPairsDegenerate, DimensionMismatch
from .kernels import (GAUSSIAN_LIP, Gaussian, Identity, ScaledDotProjected, Table,
                      boltzmann_gibbs, potential_constants)
from .measures import Box, DiscreteMeasure, bounding_box
from .transport import w1

BOUND_SLACK = 1e-9
DENOM_FLOOR = 1e-12
MODES = ("query", "measure", "self_attention", "gaussian_unbounded")
ASSERTED_MODES = ("query", "gaussian_unbounded")


# -- closed-form bounds ------------------------------------------------------------

def bound_psi_query(P, box: Box) -> float:
    """``2 ||G||_{Lip,inf} diam_1 / eps_G`` (query perturbation of the reweighting)."""
    c = potential_constants(P, box)
    if c.lip_first == 0.0:
        return 0.0
    return 2.0 * c.lip_first * box.diam_l1 / c.require_eps()


def bound_psi_measure(P, box: Box) -> float:
    """``2 ||G||_{inf,Lip} diam_1 / eps_G`` (measure perturbation, audited only)."""
    c = potential_constants(P, box)
    if c.lip_second == 0.0:
        return 0.0
    return 2.0 * c.lip_second * box.diam_l1 / c.require_eps()


@dataclass(frozen=True)
class AttentionBound:
    tau_pi: float
    tau_psi: float
    tau_L: float
    product: float


def bound_attention(spec: AttentionSpec, box: Box, d: int, tau_L: Optional[float] = None) -> AttentionBound:
    c = potential_constants(spec.potential, box)
    lip = c.lip_first + c.lip_second
    tau_psi = 0.0 if lip == 0.0 else 2.0 * lip * box.diam_l1 / c.require_eps()
    tl = spec.lookup.lipschitz() if tau_L is None else float(tau_L)
    return AttentionBound(float(d), tau_psi, tl, float(d) * tau_psi * tl)


def bound_corollary_query(spec: AttentionSpec, box: Box, d: int,
                          tau_L: Optional[float] = None) -> Dict[str, float]:
    """Query-Lipschitz constant of attention: the 1-norm value and the Euclidean one (``* sqrt(d)``)."""
    tl = spec.lookup.lipschitz() if tau_L is None else float(tau_L)
    l1 = d * tl * bound_psi_query(spec.potential, box)
    return {"l1": l1, "euclidean": math.sqrt(d) * l1}


def bound_gaussian_unbounded(N: int, M: int, d: int, tau_L: float = 1.0) -> float:
    if min(N, M, d) < 1:
        raise ValueError("N, M and d must be at least 1")
    n = min(N, M)
    bracket = (math.sqrt(d) * math.sqrt(math.log(n) + 1.0 / (2.0 * math.e)) * GAUSSIAN_LIP
               + 1.0 + math.sqrt(d) + 2.0)
    return 2.0 * d * tau_L * bracket


def ratio_function(n: float, x):
    """``n x e^{-x^2} / (1 + n e^{-x^2})``, written as ``x / (1 + e^{x^2}/n)``."""
    x = np.asarray(x, dtype=float)
    return x / (1.0 + np.exp(x * x - math.log(n)))


def ratio_lemma_max(n: float) -> Dict[str, float]:
    if n < 1:
        raise ValueError("n must be at least 1")
    hi = math.sqrt(math.log(n) + 1.0) + 3.0
    xs = np.linspace(0.0, hi, 4001)
    i = int(np.argmax(ratio_function(n, xs)))
    lo_b, hi_b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(lambda x: -float(ratio_function(n, x)), bracket=(lo_b, xs[i], hi_b),
                          method="golden", tol=1e-12)
    sup = max(float(-res.fun), float(ratio_function(n, xs[i])))
    bound = math.sqrt(math.log(n) + 1.0 / (2.0 * math.e))
    return {"n": n, "sup_estimate": sup, "argmax": float(res.x), "bound": bound,
            "holds": bool(sup <= bound + BOUND_SLACK)}


def check_local_lipschitz_reduction(f: Callable, a: float, b: float, n: int = 1001,
                                    radius: float = 1.0, rtol: float = 1e-6) -> Dict[str, float]:
    """Compare the largest slope over close sample pairs with the one over all pairs.

    ``f`` is sampled on ``n`` equispaced points of ``[a, b]``; the spacing
    must not exceed ``radius`` so that neighbours count as close pairs.
    """
    xs = np.linspace(a, b, n)
    if n > 1 and xs[1] - xs[0] > radius:
        raise ValueError("grid spacing exceeds the locality radius")
    fx = np.array([float(f(x)) for x in xs])
    local = glob = 0.0
    for start in range(0, n, 512):
        dx = np.abs(xs[start:start + 512, None] - xs[None, :])
        df = np.abs(fx[start:start + 512, None] - fx[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(dx > 0, df / dx, 0.0)
        glob = max(glob, float(s.max()))
        local = max(local, float(np.where(dx <= radius, s, 0.0).max()))
    holds = abs(glob - local) <= rtol * max(glob, 1e-300) or glob == local
    return {"local_sup": local, "global_sup": glob, "holds": bool(holds)}


# -- empirical audits --------------------------------------------------------------

@dataclass
class BoundReport:
    """Audit outcome; ``witness`` is the instance with the largest ``ratio / bound``."""

    bound_name: str
    mode: str
    theoretical: float
    empirical_max_ratio: float
    witness: dict
    n_trials: int
    n_degenerate: int
    holds: bool
    max_ratio: float = 0.0
    tightness: float = 0.0
    n_violations: int = 0
    asserted: bool = True
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        out["witness"] = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                          for k, v in self.witness.items()}
        return out


def _instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def _fixed_dim(spec: AttentionSpec) -> Optional[int]:
    P = spec.potential
    return P.dim if isinstance(P, ScaledDotProjected) else None


def draw_instance(spec: AttentionSpec, mode: str, seed: int, index: int,
                  dim_range=(1, 4), size_range=(1, 12)) -> dict:
    """Random input pair for ``mode``, deterministic in ``(seed, index)``."""
    rng = _instance_rng(seed, index)
    d = _fixed_dim(spec) or int(rng.integers(dim_range[0], dim_range[1] + 1))
    N = int(rng.integers(size_range[0], size_range[1] + 1))
    M = int(rng.integers(size_range[0], size_range[1] + 1))
    if mode == "query":
        inst = {"q1": rng.uniform(-1, 1, d), "q2": rng.uniform(-1, 1, d),
                "K": rng.uniform(-1, 1, (N, d)), "V": rng.uniform(-1, 1, (N, d))}
        if rng.random() < 0.5:
            inst["q2"] = inst["q1"] + 1e-3 * rng.standard_normal(d)
        return inst
    if mode == "gaussian_unbounded":
        scale = float(rng.choice([0.1, 0.5, 1.0, 2.0, 4.0]))
        X = scale * rng.standard_normal((N, d))
        if rng.random() < 0.5:
            Y = scale * rng.standard_normal((M, d))
        else:
            # local perturbation, possibly with a different length
            Y = X[rng.permutation(N)[:min(N, M)]] + 1e-2 * scale * rng.standard_normal((min(N, M), d))
        return {"X": X, "Y": Y}
    inst = {"X": rng.uniform(-1, 1, (N, d)), "Y": rng.uniform(-1, 1, (M, d))}
    if mode == "measure":
        inst["x"] = rng.uniform(-1, 1, d)
    return inst


def _table(spec: AttentionSpec, K, V) -> Table:
    return Table(K, spec.lookup.apply(V))


def evaluate_instance(spec: AttentionSpec, mode: str, inst: dict, padding: float = 0.5) -> Tuple[float, float, float]:
    """``(numerator, denominator, bound)`` of one audit instance."""
    if mode == "query":
        K = np.asarray(inst["K"])
        q1 = np.asarray(inst["q1"], dtype=float)
        q2 = np.asarray(inst["q2"], dtype=float)
        table = _table(spec, K, inst["V"])
        kspec = AttentionSpec(spec.potential, table)
        keys = DiscreteMeasure(K, np.full(K.shape[0], 1.0 / K.shape[0]))
        num = float(np.abs(attention_kernel_apply(q1, keys, kspec)
                           - attention_kernel_apply(q2, keys, kspec)).sum())
        den = float(np.abs(q1 - q2).sum())
        box = bounding_box([keys], padding, extra_points=np.vstack([q1, q2]))
        bound = bound_corollary_query(spec, box, K.shape[1], tau_L=table.lipschitz())["l1"]
        return num, den, bound
    X = np.asarray(inst["X"], dtype=float)
    Y = np.asarray(inst["Y"], dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch("instance measures differ in dimension")
    mu = DiscreteMeasure(X, np.full(len(X), 1.0 / len(X)))
    nu = DiscreteMeasure(Y, np.full(len(Y), 1.0 / len(Y)))
    den = w1(mu, nu)
    d = X.shape[1]
    if mode == "measure":
        x = np.asarray(inst["x"], dtype=float)
        num = w1(boltzmann_gibbs(spec.potential, x, mu), boltzmann_gibbs(spec.potential, x, nu))
        box = bounding_box([mu, nu], padding, extra_points=x[None, :])
        return num, den, bound_psi_measure(spec.potential, box)
    num = w1(self_attention_step(mu, spec), self_attention_step(nu, spec))
    if mode == "self_attention":
        box = bounding_box([mu, nu], padding)
        return num, den, bound_attention(spec, box, d).product
    if mode == "gaussian_unbounded":
        return num, den, bound_gaussian_unbounded(len(X), len(Y), d, spec.lookup.lipschitz())
    raise ValueError(f"unknown mode {mode!r}")


def evaluate_witness(spec: AttentionSpec, mode: str, witness: dict, padding: float = 0.5) -> float:
    num, den, _ = evaluate_instance(spec, mode, {k: np.asarray(v) for k, v in witness.items()
                                                 if k not in ("ratio", "bound", "index")}, padding)
    return num / den


def _perturb(inst: dict, rng: np.random.Generator, step: float) -> dict:
    out = {k: np.array(v, dtype=float) for k, v in inst.items()}
    key = list(out)[int(rng.integers(len(out)))]
    arr = out[key].reshape(-1)
    arr[int(rng.integers(arr.size))] += step * rng.standard_normal()
    return out


def _tightness(num, den, bound):
    """``ratio / bound`` with ``0/0 = 0`` and ``r/0 = inf`` for ``r > 0``."""
    ratio = num / den
    if bound > 0:
        return ratio / bound
    return math.inf if ratio > BOUND_SLACK else 0.0


def empirical_ratio(spec: AttentionSpec, mode: str, trials: int, seed: int,
                    dim_range=(1, 4), size_range=(1, 12), padding: float = 0.5,
                    hill_steps: int = 100, instances=None) -> BoundReport:
    """Audit one bound on ``trials`` seeded instance pairs.

    Pairs whose denominator is below ``1e-12`` are skipped and counted. The
    worst pair (largest ``ratio - bound``) is refined by ``hill_steps`` random
    coordinate perturbations, keeping any change that increases the tightness.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if mode == "gaussian_unbounded" and not isinstance(spec.potential, Gaussian):
        raise ValueError("the unbounded audit applies to the Gaussian potential")
    best = None
    n_deg = 0
    n_viol = 0
    max_ratio = 0.0
    for i in range(trials):
        inst = instances[i] if instances is not None else draw_instance(spec, mode, seed, i, dim_range, size_range)
        num, den, bound = evaluate_instance(spec, mode, inst, padding)
        if den < DENOM_FLOOR:
            n_deg += 1
            continue
        ratio = num / den
        max_ratio = max(max_ratio, ratio)
        if ratio > bound + BOUND_SLACK:
            n_viol += 1
        m = _tightness(num, den, bound)
        if best is None or m > best[0]:
            best = (m, inst, ratio, bound, i)
    if best is None:
        raise AllPairsDegenerate(f"all {trials} pairs had a denominator below {DENOM_FLOOR}")
    margin, inst, ratio, bound, index = best
    rng = _instance_rng(seed, -1 % (2**32))
    step = 0.1
    for _ in range(hill_steps):
        cand = _perturb(inst, rng, step)
        try:
            num, den, b = evaluate_instance(spec, mode, cand, padding)
        except Exception:  # perturbation left the admissible set (e.g. key collision)
            continue
        if den < DENOM_FLOOR:
            continue
        max_ratio = max(max_ratio, num / den)
        if num / den > b + BOUND_SLACK:
            n_viol += 1
        if _tightness(num, den, b) > margin:
            margin, inst, ratio, bound = _tightness(num, den, b), cand, num / den, b
        else:
            step *= 0.9
    witness = {k: np.asarray(v).tolist() for k, v in inst.items()}
    witness.update(ratio=ratio, bound=bound, index=index)
    name = {"query": "query_lipschitz", "measure": "psi_measure",
            "self_attention": "attention_contraction",
            "gaussian_unbounded": "gaussian_unbounded"}[mode]
    asserted = mode in ASSERTED_MODES
    return BoundReport(name, mode, bound, ratio, witness, trials, n_deg,
                       bool(n_viol == 0), max_ratio, margin, n_viol, asserted)


def constant_probe(dim: int = 2, seed: int = 0, c: float = 1.0) -> BoundReport:
    """Measure-perturbation audit with a constant potential.

    The reweighting is then the identity, so the observed ratio is exactly 1
    while the closed-form bound is 0. The finding is recorded, not asserted.
    """
    from .kernels import Constant
    spec = AttentionSpec(Constant(c), Identity())
    rep = empirical_ratio(spec, "measure", 20, seed, dim_range=(dim, dim), size_range=(2, 6),
                          hill_steps=0)
    rep.asserted = False
    rep.notes.append("constant potential: reweighting is the identity, ratio 1 against bound 0")
    return rep
