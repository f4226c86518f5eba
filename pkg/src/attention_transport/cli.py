"""Command-line entry point ``attention-transport``.

Exit codes: 0 success, 1 an asserted check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from typing import List, Optional

import numpy as np

from . import io
from .acceptance.suite import CRITERIA, SuiteConfig, run_suite, summary_lines, write_instances
from .applications import fixed_point_iterate, sequence_perturbation
from .attention import AttentionSpec, TransformerSpec, particle_flow
from .entropy import MaxEntProblem, maxent_solve, maxent_verify, smoothed_projection_experiment
from .errors import AttentionTransportError
from .kernels import Gaussian
from .regularity import empirical_ratio
from .transport import certificate_ok, w1_exact

MODE_ALIASES = {"query": "query", "measure": "measure", "self": "self_attention",
                "self_attention": "self_attention", "gaussian": "gaussian_unbounded",
                "gaussian_unbounded": "gaussian_unbounded"}


def _emit(obj, path: Optional[str]) -> None:
    if path:
        io.write_json(path, obj)
    else:
        print(io.dumps(obj))


def _int_list(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_w1(args) -> int:
    mu, nu = io.read_measure(args.mu), io.read_measure(args.nu)
    cost, plan = w1_exact(mu, nu)
    ok = certificate_ok(mu, nu, plan)
    out = {"w1": cost, "certificate_ok": ok}
    if args.plan:
        io.write_json(args.plan, plan.to_json())
    _emit(out, args.output)
    return 0 if ok else 1


def _tspec(path: Optional[str], dim: int) -> TransformerSpec:
    if path is None:
        return TransformerSpec.single(AttentionSpec(Gaussian()), dim)
    return io.read_transformer_spec(path, dim)


def cmd_flow(args) -> int:
    mu = io.read_measure(args.input)
    traj = particle_flow(mu, _tspec(args.spec, mu.dim), args.depth)
    _emit({"trajectory": [io.measure_to_json(m) for m in traj]}, args.output)
    return 0


def cmd_audit(args) -> int:
    spec = io.read_attention_spec(args.spec)
    rep = empirical_ratio(spec, MODE_ALIASES[args.mode], args.trials, args.seed,
                          dim_range=(1, args.dim_max), size_range=(1, args.size_max),
                          padding=args.padding, hill_steps=args.hill_steps)
    _emit(rep.to_json(), args.report)
    return 1 if rep.asserted and not rep.holds else 0


def _load_matrix(path: str, key: str) -> np.ndarray:
    obj = io.read_json(path)
    if isinstance(obj, dict):
        obj = obj[key]
    return np.array(obj, dtype=float)


def cmd_maxent(args) -> int:
    base = io.read_measure(args.base)
    problem = MaxEntProblem(base, _load_matrix(args.features, "features"),
                            _load_matrix(args.target, "target"))
    res = maxent_solve(problem, tol=args.tol, max_iter=args.max_iter)
    out = {"lambda": res.lam, "solution": io.measure_to_json(res.solution),
           "iterations": res.iterations, "converged": res.converged,
           "grad_norm": res.grad_norm, "regularized": res.regularized}
    ok = res.converged
    if args.verify:
        ver = maxent_verify(problem, res.solution, args.verify, args.seed)
        out["verification"] = {"holds": ver.holds, "worst_gap": ver.worst_gap,
                               "samples": ver.n_accepted, "identity_error": ver.identity_error}
        ok = ok and ver.holds
    _emit(out, args.output)
    return 0 if ok else 1


def cmd_fixed_point(args) -> int:
    mu = io.read_measure(args.input)
    res = fixed_point_iterate(mu, _tspec(args.spec, mu.dim), args.tol, args.max_iter)
    _emit({"final": io.measure_to_json(res.final), "history": res.history,
           "converged": res.converged, "iterations": res.iterations, "q": res.q,
           "box_ok": res.box_ok, "decay_ok": res.decay_ok}, args.output)
    return 0 if res.converged and res.decay_ok is not False else 1


def cmd_perturb(args) -> int:
    A, B = io.read_points(args.a), io.read_points(args.b)
    out = sequence_perturbation(A, B, _tspec(args.spec, A.shape[1]), args.depth)
    _emit(out, args.output)
    return 0


def cmd_smoothed(args) -> int:
    mu = io.read_measure(args.input)
    rows = smoothed_projection_experiment(mu, _float_list(args.sigmas), args.samples, args.seed)
    handle = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    try:
        writer = csv.writer(handle)
        writer.writerow(["sigma", "estimate", "distance_to_mean", "stderr"])
        for r in rows:
            writer.writerow([r.sigma, " ".join(repr(float(v)) for v in r.argmin_estimate),
                             r.distance_to_mean, r.stderr])
    finally:
        if handle is not sys.stdout:
            handle.close()
    return 0


def _suite_config(args) -> SuiteConfig:
    return SuiteConfig(master_seed=args.seed, trials=args.trials,
                       dim_range=(args.dim_min, args.dim_max),
                       size_range=(args.size_min, args.size_max), box_padding=args.padding,
                       potentials=tuple(args.potentials.split(",")), lookup=args.lookup,
                       smoothed_samples=args.smoothed_samples,
                       criteria=tuple(_int_list(args.criteria)) if args.criteria else None,
                       output_path=args.report).validate()


def cmd_suite(args) -> int:
    cfg = _suite_config(args)
    report = run_suite(cfg, progress=lambda row: print(summary_lines({"criteria": [row]})[0],
                                                       file=sys.stderr, flush=True))
    for line in summary_lines(report):
        print(line)
    print("suite " + ("PASS" if report["passed"] else "FAIL"))
    return report["exit_code"]


def cmd_generate(args) -> int:
    cfg = _suite_config(args)
    paths = write_instances(cfg, args.out_dir)
    print(f"wrote {len(paths)} instances to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attention-transport",
                                description="Attention as transport of discrete measures.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("w1", help="exact 1-Wasserstein distance between two instances")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--plan", help="write the transport plan JSON here")
    s.add_argument("--output")
    s.set_defaults(func=cmd_w1)

    s = sub.add_parser("flow", help="particle trajectory under repeated transformer steps")
    s.add_argument("--input", required=True)
    s.add_argument("--spec")
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("audit", help="empirical audit of one contraction bound")
    s.add_argument("--spec", required=True)
    s.add_argument("--mode", required=True, choices=sorted(MODE_ALIASES))
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--dim-max", type=int, default=4)
    s.add_argument("--size-max", type=int, default=12)
    s.add_argument("--padding", type=float, default=0.5)
    s.add_argument("--hill-steps", type=int, default=100)
    s.add_argument("--report")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("maxent", help="maximum-entropy reweighting by dual Newton")
    s.add_argument("--base", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--verify", type=int, default=0, help="number of feasible samples to compare")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--output")
    s.set_defaults(func=cmd_maxent)

    s = sub.add_parser("fixed-point", help="iterate a weight-shared transformer layer")
    s.add_argument("--input", required=True)
    s.add_argument("--spec")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--output")
    s.set_defaults(func=cmd_fixed_point)

    s = sub.add_parser("perturb", help="W1 amplification between two token sequences")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--spec")
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_perturb)

    s = sub.add_parser("smoothed", help="Gaussian-smoothed KL projection experiment (CSV)")
    s.add_argument("--input", required=True)
    s.add_argument("--sigmas", default="2,1,0.5,0.25")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_smoothed)

    for name, fn, helptext in (("suite", cmd_suite, "run the acceptance suite"),
                               ("generate", cmd_generate, "write seeded instance files")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--trials", type=int, default=1000)
        s.add_argument("--seed", type=int, default=7)
        s.add_argument("--dim-min", type=int, default=1)
        s.add_argument("--dim-max", type=int, default=4)
        s.add_argument("--size-min", type=int, default=1)
        s.add_argument("--size-max", type=int, default=12)
        s.add_argument("--padding", type=float, default=0.5)
        s.add_argument("--potentials", default="gaussian,expdot")
        s.add_argument("--lookup", default="identity")
        s.add_argument("--smoothed-samples", type=int, default=100_000)
        s.add_argument("--criteria", help=f"comma-separated subset of {sorted(CRITERIA)}")
        s.add_argument("--report")
        if name == "generate":
            s.add_argument("--out-dir", required=True)
        s.set_defaults(func=fn)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AttentionTransportError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
