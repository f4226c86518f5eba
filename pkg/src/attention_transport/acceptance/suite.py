"""Seeded reproduction suite: one function per acceptance criterion.

Instance counts are the nominal ones at ``trials = 1000`` and scale
linearly with ``trials`` (at least one instance each). Criteria run in
parallel processes when ``ATTN_TRANSPORT_THREADS`` is above 1; results are
merged in criterion order so reports do not depend on scheduling.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import jsonschema
import numpy as np

from ..applications import contractive_scale, fixed_point_iterate
from ..attention import (AttentionSpec, FFNLayer, Head, TransformerSpec, attention_classical,
                         attention_via_kernel, discrete_recovery_check, particle_flow,
                         transformer_classical, transformer_step)
from ..entropy import (MaxEntProblem, expfam_member, expfam_project, kl_weights, maxent_solve,
                       maxent_verify, smoothed_contract, smoothed_projection_experiment,
                       theta_grid_check, expfam_log_density)
from ..errors import ConfigError
from ..io import dumps, measure_to_json, write_json
from ..kernels import (Constant, ExpDot, Gaussian, Identity, Linear, Scale, ScaledDotProjected)
from ..measures import Box, DiscreteMeasure, dirac, empirical
from ..regularity import constant_probe, empirical_ratio, ratio_lemma_max
from ..transport import (certificate_ok, check_tensorization, w1, w1_assignment, w1_exact)

TOL = 1e-9
CORNER_DIM_CAP = 20


@dataclass
class SuiteConfig:
    master_seed: int = 7
    trials: int = 1000
    dim_range: Tuple[int, int] = (1, 4)
    size_range: Tuple[int, int] = (1, 12)
    box_padding: float = 0.5
    potentials: Tuple[str, ...] = ("gaussian", "expdot")
    lookup: str = "identity"
    smoothed_samples: int = 100_000
    criteria: Optional[Tuple[int, ...]] = None
    output_path: Optional[str] = None

    def validate(self) -> "SuiteConfig":
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        for name in ("dim_range", "size_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} must be a nonempty range of positive integers")
        if self.dim_range[1] > CORNER_DIM_CAP:
            raise ConfigError(f"dimension is capped at {CORNER_DIM_CAP}")
        if self.box_padding < 0:
            raise ConfigError("box_padding must be nonnegative")
        if self.smoothed_samples < 10_000:
            raise ConfigError("smoothed_samples must be at least 10^4")
        unknown = set(self.potentials) - set(POTENTIAL_FAMILIES)
        if unknown:
            raise ConfigError(f"unknown potential families {sorted(unknown)}")
        if self.lookup not in ("identity", "scale"):
            raise ConfigError("lookup must be 'identity' or 'scale'")
        if self.criteria is not None and not set(self.criteria) <= set(CRITERIA):
            raise ConfigError(f"criteria must be among {sorted(CRITERIA)}")
        return self

    def count(self, nominal: int) -> int:
        return max(1, round(nominal * self.trials / 1000))

    def public(self) -> dict:
        out = asdict(self)
        out["dim_range"] = list(self.dim_range)
        out["size_range"] = list(self.size_range)
        out["potentials"] = list(self.potentials)
        out["criteria"] = None if self.criteria is None else list(self.criteria)
        return out


POTENTIAL_FAMILIES = {"gaussian": Gaussian, "expdot": ExpDot, "constant": Constant}


def rng_for(seed: int, *counter: int) -> np.random.Generator:
    """Counter-based generator keyed by the master seed and a counter tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *counter])))


def generate_instance(config: SuiteConfig, index: int) -> dict:
    """Uniform points in ``[-1, 1]^d``, deterministic in ``(master_seed, index)``."""
    rng = rng_for(config.master_seed, 0, index)
    d = int(rng.integers(config.dim_range[0], config.dim_range[1] + 1))
    n = int(rng.integers(config.size_range[0], config.size_range[1] + 1))
    return measure_to_json(empirical(rng.uniform(-1.0, 1.0, (n, d))))


def write_instances(config: SuiteConfig, directory) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(config.trials):
        p = directory / f"instance_{i:05d}.json"
        write_json(p, generate_instance(config, i))
        paths.append(p)
    return paths


# -- criteria ---------------------------------------------------------------------

def _random_potential(kind: int, d: int, rng):
    if kind == 0:
        return ExpDot(float(rng.uniform(0.2, 1.5)))
    if kind == 1:
        dp = int(rng.integers(1, d + 2))
        return ScaledDotProjected(rng.normal(size=(dp, d)), rng.normal(size=(dp, d)))
    if kind == 2:
        return Gaussian()
    return Constant(float(rng.uniform(0.5, 2.0)))


def _random_lookup(kind: int, d: int, rng):
    if kind == 0:
        return Identity()
    if kind == 1:
        return Linear(rng.normal(size=(d, d)))
    return Scale(float(rng.uniform(-2, 2)))


def criterion_equivalence(cfg: SuiteConfig) -> dict:
    worst = 0.0
    witness = None
    n = cfg.count(1000)
    for i in range(n):
        rng = rng_for(cfg.master_seed, 1, i)
        d = int(rng.integers(1, 9))
        N, M = (int(v) for v in rng.integers(1, 17, size=2))
        spec = AttentionSpec(_random_potential(i % 4, d, rng), _random_lookup((i // 4) % 3, d, rng))
        Q, K, V = rng.uniform(-1, 1, (N, d)), rng.uniform(-1, 1, (M, d)), rng.uniform(-1, 1, (M, d))
        dev = float(np.abs(attention_classical(Q, K, V, spec) - attention_via_kernel(Q, K, V, spec)).max())
        H = 1 + i % 2
        heads = []
        for h in range(H):
            hs = AttentionSpec(_random_potential((i + h) % 4, d, rng), _random_lookup((i + h) % 3, d, rng))
            heads.append(Head(hs, rng.normal(size=(d, d)) / d))
        ffn = () if i % 3 else (FFNLayer(rng.normal(size=(d, d)), rng.normal(size=d), "relu"),)
        tspec = TransformerSpec(tuple(heads), ffn)
        X = rng.uniform(-1, 1, (N, d))
        dev = max(dev, float(np.abs(transformer_classical(X, tspec)
                                    - transformer_step(empirical(X), tspec).points).max()))
        if dev >= worst:
            worst, witness = dev, {"index": i, "dim": d, "potential": spec.potential.to_json()["type"]}
    return {"passed": worst <= 1e-10, "metrics": {"instances": n, "max_deviation": worst},
            "witness": witness}


def criterion_discrete_recovery(cfg: SuiteConfig) -> dict:
    n = cfg.count(200)
    worst = 0.0
    for i in range(n):
        rng = rng_for(cfg.master_seed, 2, i)
        d = int(rng.integers(1, 9))
        N = int(rng.integers(1, 17))
        Q, K, V = rng.normal(size=(N, d)), rng.normal(size=(N, d)), rng.normal(size=(N, d))
        worst = max(worst, discrete_recovery_check(Q, K, V, _random_potential(i % 3, d, rng)))
    return {"passed": worst <= 1e-10, "metrics": {"instances": n, "max_deviation": worst}}


def _random_measure(rng, n, d, uniform):
    pts = rng.uniform(-1, 1, (n, d))
    if uniform:
        return empirical(pts)
    return DiscreteMeasure(pts, rng.dirichlet(np.ones(n)))


def criterion_exact_transport(cfg: SuiteConfig) -> dict:
    n = cfg.count(1000)
    fails = {"identity": 0, "symmetry": 0, "triangle": 0, "certificate": 0, "assignment": 0, "dirac": 0}
    n_assign = 0
    for i in range(n):
        rng = rng_for(cfg.master_seed, 3, i)
        d = int(rng.integers(cfg.dim_range[0], cfg.dim_range[1] + 1))
        uniform = i % 3 == 0
        sizes = ([int(rng.integers(1, 9))] * 3 if uniform
                 else [int(v) for v in rng.integers(1, 13, size=3)])
        a, b, c = (_random_measure(rng, s, d, uniform) for s in sizes)
        ab, plan_ab = w1_exact(a, b)
        ba, plan_ba = w1_exact(b, a)
        bc, plan_bc = w1_exact(b, c)
        ac, plan_ac = w1_exact(a, c)
        fails["identity"] += w1(a, a) > TOL
        fails["symmetry"] += abs(ab - ba) > TOL
        fails["triangle"] += ac > ab + bc + TOL
        fails["certificate"] += not all(certificate_ok(x, y, p) for x, y, p in
                                        ((a, b, plan_ab), (b, a, plan_ba), (b, c, plan_bc), (a, c, plan_ac)))
        if uniform:
            n_assign += 1
            fails["assignment"] += abs(w1_assignment(a, b) - ab) > TOL
        x, y = rng.uniform(-5, 5, d), rng.uniform(-5, 5, d)
        fails["dirac"] += w1(dirac(x), dirac(y)) != float(np.abs(x - y).sum())
    return {"passed": not any(fails.values()),
            "metrics": {"triples": n, "assignment_cases": n_assign, "failures": fails}}


def _maxent_instance(rng):
    N = int(rng.integers(2, 21))
    l = int(rng.integers(1, min(4, N - 1) + 1))
    base = DiscreteMeasure(rng.normal(size=(N, 1)), rng.dirichlet(np.ones(N)))
    K = rng.normal(size=(l, N))
    target = K @ rng.dirichlet(np.ones(N))
    return MaxEntProblem(base, K, target)


def criterion_maxent(cfg: SuiteConfig) -> dict:
    n = cfg.count(200)
    worst_res = worst_gibbs = 0.0
    worst_gap = -math.inf
    worst_ident = 0.0
    not_converged = 0
    for i in range(n):
        rng = rng_for(cfg.master_seed, 4, i)
        prob = _maxent_instance(rng)
        res = maxent_solve(prob)
        not_converged += not res.converged
        worst_res = max(worst_res, float(np.abs(prob.features @ res.solution.weights - prob.target).max()))
        # independent reconstruction of the Gibbs form
        s = res.lam @ prob.features
        g = prob.base.weights * np.exp(s - s.max())
        worst_gibbs = max(worst_gibbs, float(np.abs(g / g.sum() - res.solution.weights).max()))
        ver = maxent_verify(prob, res.solution, 500, seed=int(rng.integers(2**31)))
        worst_gap = max(worst_gap, ver.worst_gap)
        worst_ident = max(worst_ident, ver.identity_error)
    logit_target = 1.0 / (1.0 + math.exp(-1.0))
    logit = maxent_solve(MaxEntProblem(empirical([0.0, 1.0]), [[0.0, 1.0]], [logit_target]))
    lam = float(logit.lam[0])
    passed = (worst_res <= 1e-8 and worst_gibbs <= 1e-12 and worst_gap <= TOL
              and worst_ident <= TOL and abs(lam - 1.0) <= 1e-6)
    return {"passed": bool(passed), "metrics": {
        "problems": n, "max_residual": worst_res, "max_gibbs_error": worst_gibbs,
        "worst_entropy_gap": worst_gap, "max_identity_error": worst_ident,
        "not_converged": not_converged, "logit_lambda": lam}}


def criterion_kl_projections(cfg: SuiteConfig) -> dict:
    n = cfg.count(50)
    worst_theta = 0.0
    worst_grid = math.inf
    worst_pyth = 0.0
    for i in range(n):
        rng = rng_for(cfg.master_seed, 5, i)
        d = 1 + i % 2
        axis = np.arange(int(rng.integers(2, 5)), dtype=float)
        grid = np.array(list(itertools.product(axis, repeat=d)))
        theta0 = rng.uniform(-1.5, 1.5, d)
        proj = expfam_project(expfam_member(grid, theta0), grid)
        worst_theta = max(worst_theta, float(np.abs(proj.theta - theta0).max()))
        # arbitrary measure on the grid: grid check and Pythagorean identity
        mu = DiscreteMeasure(grid, rng.dirichlet(np.ones(len(grid))))
        pm = expfam_project(mu, grid)
        gap, _ = theta_grid_check(mu, grid, pm.theta, seed=i)
        worst_grid = min(worst_grid, gap)
        theta = rng.normal(size=d)
        p_star = np.exp(expfam_log_density(grid, pm.theta))
        p_theta = np.exp(expfam_log_density(grid, theta))
        lhs = kl_weights(mu.weights, p_theta) - kl_weights(mu.weights, p_star)
        worst_pyth = max(worst_pyth, abs(lhs - kl_weights(p_star, p_theta)))
    est = smoothed_projection_experiment(empirical([-1.0, 1.0]), [2.0, 1.0, 0.5, 0.25],
                                         cfg.smoothed_samples, cfg.master_seed)
    final = est[-1]
    smooth_ok = smoothed_contract(est, 0.05) and final.distance_to_mean <= 3 * final.stderr + 0.05
    passed = worst_theta <= 1e-8 and worst_grid >= -TOL and worst_pyth <= TOL and smooth_ok
    return {"passed": bool(passed), "metrics": {
        "roundtrips": n, "max_theta_error": worst_theta, "min_grid_gap": worst_grid,
        "max_pythagorean_error": worst_pyth,
        "smoothed": [{"sigma": e.sigma, "estimate": e.argmin_estimate.tolist(),
                      "distance_to_mean": e.distance_to_mean, "stderr": e.stderr} for e in est]}}


def _audit_metrics(rep) -> dict:
    return {"trials": rep.n_trials, "degenerate": rep.n_degenerate, "violations": rep.n_violations,
            "max_ratio": rep.max_ratio, "witness_ratio": rep.empirical_max_ratio,
            "witness_bound": rep.theoretical, "tightness": rep.tightness}


def criterion_query_lipschitz(cfg: SuiteConfig) -> dict:
    n = cfg.count(1000)
    out = {}
    passed = True
    witness = {}
    for name in ("gaussian", "expdot"):
        P = Gaussian() if name == "gaussian" else ExpDot(1.0)
        rep = empirical_ratio(AttentionSpec(P, Identity()), "query", n, cfg.master_seed,
                              dim_range=(1, 8), size_range=(1, 16), padding=cfg.box_padding)
        out[name] = _audit_metrics(rep)
        witness[name] = rep.to_json()["witness"]
        passed &= rep.holds
    return {"passed": bool(passed), "metrics": out, "witness": witness}


def criterion_gaussian_unbounded(cfg: SuiteConfig) -> dict:
    rep = empirical_ratio(AttentionSpec(Gaussian(), Identity()), "gaussian_unbounded", cfg.count(1000),
                          cfg.master_seed, dim_range=(1, 4), size_range=(1, 12))
    return {"passed": rep.holds, "metrics": _audit_metrics(rep), "witness": rep.to_json()["witness"]}


def criterion_ratio_lemma(cfg: SuiteConfig) -> dict:
    rows = [ratio_lemma_max(n) for n in (1, 2, 10, 100, 1000, 10**6)]
    return {"passed": all(r["holds"] for r in rows), "metrics": {"rows": rows}}


def criterion_fixed_point(cfg: SuiteConfig) -> dict:
    d = 2
    box = Box(-np.ones(d), np.ones(d))
    alpha = contractive_scale(Gaussian(), box, 0.5)
    tspec = TransformerSpec.single(AttentionSpec(Gaussian(), Scale(alpha)), d)
    tol = 1e-8
    finals = []
    ok = True
    worst_ratio = 0.0
    q = None
    for i in range(20):
        rng = rng_for(cfg.master_seed, 9, i)
        res = fixed_point_iterate(empirical(rng.uniform(-1, 1, (6, d))), tspec, tol, 500, box)
        q = res.q
        ok &= res.converged and res.box_ok and bool(res.decay_ok)
        worst_ratio = max([worst_ratio] + res.step_ratios)
        finals.append(res.final)
    pair = max(w1(a, b) for a, b in itertools.combinations(finals, 2))
    passed = ok and q < 1 and worst_ratio <= q + TOL and pair <= 2 * tol / (1 - q)
    return {"passed": bool(passed), "metrics": {"alpha": alpha, "q": q, "max_step_ratio": worst_ratio,
                                                "max_pairwise_final_w1": pair, "starts": 20}}


def criterion_permutation_tensor(cfg: SuiteConfig) -> dict:
    n_perm = cfg.count(200)
    perm_fail = 0
    for i in range(n_perm):
        rng = rng_for(cfg.master_seed, 10, i)
        d = int(rng.integers(1, 5))
        N = int(rng.integers(1, 13))
        X = rng.normal(size=(N, d))
        p = rng.permutation(N)
        spec = AttentionSpec(_random_potential(i % 4, d, rng), _random_lookup(i % 3, d, rng))
        tspec = TransformerSpec.single(spec, d)
        a = particle_flow(empirical(X), tspec, 3)
        b = particle_flow(empirical(X[p]), tspec, 3)
        perm_fail += not all(np.array_equal(x.points[p], y.points) for x, y in zip(a, b))
    n_tensor = cfg.count(1000)
    tensor_fail = 0
    worst = -math.inf
    for i in range(n_tensor):
        rng = rng_for(cfg.master_seed, 11, i)
        d1, d2 = (int(v) for v in rng.integers(1, 4, size=2))
        ms = [_random_measure(rng, int(rng.integers(1, 5)), dd, False) for dd in (d1, d2, d1, d2)]
        lhs, rhs, holds = check_tensorization(*ms)
        tensor_fail += not holds
        worst = max(worst, lhs - rhs)
    return {"passed": perm_fail == 0 and tensor_fail == 0, "metrics": {
        "permutation_instances": n_perm, "permutation_failures": perm_fail,
        "tensor_instances": n_tensor, "tensor_failures": tensor_fail, "max_lhs_minus_rhs": worst}}


def criterion_degenerate_audit(cfg: SuiteConfig) -> dict:
    """Recorded findings; this criterion never fails the suite."""
    probe = constant_probe(seed=cfg.master_seed)
    findings = [{"name": "constant_potential_measure_inequality", "bound": probe.theoretical,
                 "observed_ratio": probe.max_ratio,
                 "note": "reweighting by a constant potential is the identity; the bound is 0"}]
    reported = {}
    n = cfg.count(100)
    for fam in cfg.potentials:
        if fam == "constant":
            continue
        P = POTENTIAL_FAMILIES[fam]()
        lookup = Identity() if cfg.lookup == "identity" else Scale(0.5)
        for mode in ("measure", "self_attention"):
            rep = empirical_ratio(AttentionSpec(P, lookup), mode, n, cfg.master_seed,
                                  dim_range=cfg.dim_range, size_range=(max(cfg.size_range[0], 1), cfg.size_range[1]),
                                  padding=cfg.box_padding)
            reported[f"{fam}_{mode}"] = _audit_metrics(rep)
            if not rep.holds:
                findings.append({"name": f"{fam}_{mode}", "bound": rep.theoretical,
                                 "observed_ratio": rep.empirical_max_ratio,
                                 "note": "reported bound exceeded on the seeded suite"})
    return {"passed": True, "metrics": {"probe": _audit_metrics(probe), "reported": reported},
            "findings": findings}


CRITERIA: Dict[int, Tuple[str, Callable, bool]] = {
    1: ("equivalence", criterion_equivalence, True),
    2: ("discrete_recovery", criterion_discrete_recovery, True),
    3: ("exact_transport", criterion_exact_transport, True),
    4: ("maximum_entropy", criterion_maxent, True),
    5: ("kl_projections", criterion_kl_projections, True),
    6: ("query_lipschitz", criterion_query_lipschitz, True),
    7: ("gaussian_unbounded", criterion_gaussian_unbounded, True),
    8: ("ratio_lemma", criterion_ratio_lemma, True),
    9: ("fixed_point", criterion_fixed_point, True),
    10: ("permutation_tensorization", criterion_permutation_tensor, True),
    11: ("degenerate_audit", criterion_degenerate_audit, False),
}


def run_criterion(cid: int, cfg: SuiteConfig) -> dict:
    name, fn, asserted = CRITERIA[cid]
    start = time.perf_counter()
    try:
        out = fn(cfg)
        err = None
    except Exception as exc:  # surfaced in the report with the criterion tag
        out = {"passed": False, "metrics": {}}
        err = f"[{name}] {type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
    row = {"id": cid, "name": name, "asserted": asserted, "passed": bool(out["passed"]),
           "metrics": out["metrics"], "witness": out.get("witness"), "error": err,
           "seconds": time.perf_counter() - start}
    return {"row": row, "findings": out.get("findings", [])}


def thread_count() -> int:
    raw = os.environ.get("ATTN_TRANSPORT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"ATTN_TRANSPORT_THREADS must be an integer, got {raw!r}")


def load_schema() -> dict:
    text = resources.files("attention_transport").joinpath("schemas/suite_report.schema.json").read_text("utf-8")
    return json.loads(text)


def _jsonable(obj):
    return json.loads(dumps(obj))


def run_suite(cfg: SuiteConfig, progress: Optional[Callable[[dict], None]] = None) -> dict:
    """Run the selected criteria and return the validated aggregate report."""
    cfg.validate()
    ids = sorted(cfg.criteria or CRITERIA)
    workers = min(thread_count(), len(ids))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run_criterion, ids, [cfg] * len(ids)))
    else:
        results = []
        for cid in ids:
            results.append(run_criterion(cid, cfg))
            if progress:
                progress(results[-1]["row"])
    rows = [r["row"] for r in results]
    findings = [f for r in results for f in r["findings"]]
    passed = all(r["passed"] for r in rows if r["asserted"]) and all(r["error"] is None for r in rows)
    report = _jsonable({"config": cfg.public(), "criteria": rows, "findings": findings,
                        "passed": passed, "exit_code": 0 if passed else 1})
    jsonschema.validate(report, load_schema())
    if cfg.output_path:
        write_json(cfg.output_path, report)
    return report


def strip_timings(report: dict) -> dict:
    out = json.loads(json.dumps(report))
    for row in out["criteria"]:
        row.pop("seconds", None)
    return out


def summary_lines(report: dict) -> List[str]:
    lines = []
    for row in report["criteria"]:
        status = "PASS" if row["passed"] else "FAIL"
        kind = "asserted" if row["asserted"] else "reported"
        lines.append(f"[{status}] criterion {row['id']:>2} {row['name']} ({kind}, {row['seconds']:.1f}s)")
    return lines
