"""Command-line entry point.

Subcommands:
  gen    write a synthetic dataset file
  check  run the necessary-condition report on a dataset file
  solve  run one method on a dataset file or generator spec
  bench  run a full experiment from a config file (flags override)

Exit codes: 0 success, 2 assumption-check failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, default_methods, run_experiment
from .dataset import (
    FAMILIES,
    GeneratorConfig,
    ShapeMatrixSpec,
    check_necessary_conditions,
    generate,
    load_points,
    save_points,
)
from .errors import AssumptionCheckFailed, TylerFWError
from .solver import SolveConfig, solve


def _add_generator_flags(p: argparse.ArgumentParser):
    p.add_argument("--p", type=int, help="ambient dimension")
    p.add_argument("--n", type=int, help="number of points")
    p.add_argument("--family", choices=FAMILIES, default="sphere_uniform")
    p.add_argument("--rho", type=float, default=0.85,
                   help="toeplitz shape parameter (identity shape if omitted)")
    p.add_argument("--toeplitz", action="store_true",
                   help="use the toeplitz(rho) shape matrix")
    p.add_argument("--dof", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)


def _generator_from_args(args) -> GeneratorConfig:
    if args.p is None or args.n is None:
        raise SystemExit("--p and --n are required without an input file")
    shape = (ShapeMatrixSpec(args.p, kind="toeplitz", rho=args.rho)
             if args.toeplitz else ShapeMatrixSpec(args.p, kind="identity"))
    return GeneratorConfig(p=args.p, n=args.n, family=args.family,
                           shape=shape, dof=args.dof, seed=args.seed)


def _load_or_generate(args):
    if getattr(args, "input", None):
        return load_points(args.input)
    return generate(_generator_from_args(args))


def _cmd_gen(args) -> int:
    data = generate(_generator_from_args(args))
    save_points(data, args.out)
    print(f"wrote {data.p} x {data.n} dataset ({data.provenance}) to {args.out}")
    return 0


def _cmd_check(args) -> int:
    data = _load_or_generate(args)
    report = check_necessary_conditions(data)
    print(f"rank_full: {report.rank_full}")
    print(f"n_gt_p:    {report.n_gt_p}")
    print(f"n_ge_2p:   {report.n_ge_2p}")
    if not report.solvable:
        failed = [name for name, ok in
                  (("rank_full", report.rank_full), ("n_gt_p", report.n_gt_p))
                  if not ok]
        print(f"FAILED necessary conditions: {', '.join(failed)}")
        return 2
    print("necessary conditions hold")
    return 0


def _cmd_solve(args) -> int:
    data = _load_or_generate(args)
    cfg = SolveConfig(variant=args.variant, beta=args.beta,
                      tol_residual=args.tol, max_iters=args.max_iters)
    result = solve(data, cfg)
    print(f"variant:   {result.variant}")
    print(f"converged: {result.converged} after {result.iters} iterations")
    print(f"objective: {result.objective_final:.12g} "
          f"(started at {result.objective0:.12g})")
    print(f"oracle matvecs: {result.oracle_stats}")
    np.set_printoptions(precision=6, suppress=True, linewidth=120)
    print("q_final:")
    print(result.q_final)
    if args.out:
        np.savetxt(args.out, result.q_final)
        print(f"wrote q_final to {args.out}")
    return 0


def _read_config_file(path) -> dict:
    """Flat 'key = value' config text; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"malformed config line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _cmd_bench(args) -> int:
    kv = _read_config_file(args.config) if args.config else {}

    def pick(name, cast, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        return cast(kv[name]) if name in kv else default

    p = pick("p", int, 50)
    n = pick("n", int, p * p)
    family = pick("family", str, "gaussian_contaminated")
    rho = pick("rho", float, 0.85)
    dof = pick("dof", float, 2.0)
    seed = pick("seed", int, 0)
    beta = pick("beta", float, 0.5)
    tol = pick("tol", float, 1e-6)
    repeats = pick("repeats", int, 20)
    reference_iters = pick("reference_iters", int, 250)
    out = pick("out", str, "bench_out")
    variants = tuple(pick("methods", lambda s: s.replace(" ", ""),
                          "fw,afw,gafw,fpi").split(","))
    shape = (ShapeMatrixSpec(p, kind="toeplitz", rho=rho)
             if family != "sphere_uniform" else ShapeMatrixSpec(p, kind="identity"))
    gen = GeneratorConfig(p=p, n=n, family=family, shape=shape, dof=dof,
                          seed=seed)
    methods = default_methods(p, reference_iters=reference_iters, beta=beta,
                              tol_residual=tol, variants=variants)
    cfg = ExperimentConfig(generator=gen, methods=methods, output_dir=out,
                           reference_iters=reference_iters, repeats=repeats,
                           base_seed=seed)
    manifest = run_experiment(cfg)
    done = len(manifest["repeats"])
    print(f"{done}/{repeats} repeats completed; "
          f"aggregate: {manifest['aggregate']}")
    for failure in manifest["failures"]:
        print(f"repeat {failure['repeat']} failed: {failure['error']}",
              file=sys.stderr)
    return 0 if done else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tylerfw",
        description="Tyler's M-estimator via Frank-Wolfe variants")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset file")
    _add_generator_flags(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    c = sub.add_parser("check", help="necessary-condition report")
    c.add_argument("--input", help="dataset file (else generator flags)")
    _add_generator_flags(c)
    c.set_defaults(func=_cmd_check)

    s = sub.add_parser("solve", help="run one method")
    s.add_argument("--input", help="dataset file (else generator flags)")
    _add_generator_flags(s)
    s.add_argument("--variant", choices=("fw", "afw", "gafw", "fpi"),
                   default="gafw")
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", dest="max_iters", type=int)
    s.add_argument("--out", help="write q_final to this path")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bench", help="full experiment from a config file")
    b.add_argument("--config", help="flat key = value config file")
    for name, typ in (("p", int), ("n", int), ("rho", float), ("dof", float),
                      ("seed", int), ("beta", float), ("tol", float),
                      ("repeats", int), ("reference-iters", int)):
        b.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ)
    b.add_argument("--family", choices=FAMILIES)
    b.add_argument("--methods")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssumptionCheckFailed as exc:
        print(f"assumption check failed: {exc}", file=sys.stderr)
        return 2
    except TylerFWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
