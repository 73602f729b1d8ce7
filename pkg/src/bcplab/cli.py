"""Command-line entry point: ``bcplab <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .core import Thresholds, as_fraction
from .errors import ValidationError
from .exact import brute_force_decide
from .generators import GenSpec, generate
from .harness import (ExperimentReport, bench_scaling, estimate_collision_rate,
                      verify_envelope, verify_pipeline_equivalence)
from .io import read_instance, write_instance
from .minhash import derive_lsh_params, lsh_decide
from .plan import ParamPlan, build_plan
from .reductions import harden_pipeline

EXIT_FOUND, EXIT_NONE, EXIT_ERROR = 0, 1, 2


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def _load_plan(path: str) -> ParamPlan:
    return ParamPlan.from_dict(_load_json(path))


def _emit(report: ExperimentReport, as_csv: bool) -> int:
    sys.stdout.write(report.to_csv() if as_csv else report.to_json(indent=2) + "\n")
    return 0 if report.passed else 1


def cmd_generate(args) -> int:
    spec = GenSpec.from_dict(_load_json(args.spec))
    inst, planted = generate(spec)
    write_instance(inst, args.out)
    print(json.dumps({"out": args.out, "n_red": inst.n_red, "n_blue": inst.n_blue,
                      "universe": inst.universe_size,
                      "planted": None if planted is None else list(planted)}))
    return 0


def cmd_plan(args) -> int:
    plan = build_plan(args.delta, args.T, args.m, args.n, args.j1, args.j2, gamma=args.gamma)
    if args.json:
        print(json.dumps(plan.to_dict(), indent=2))
        return 0
    st = plan.stage_thresholds
    print(f"gamma={plan.gamma:.6g} ({plan.gamma_source})  i={plan.i}  alpha={plan.alpha:.6g}")
    print("thresholds: " + "  ".join(f"{k}={v:.6g}" for k, v in st.items()))
    print(f"x2={plan.x2}  l_delta={plan.ell_delta}  sample_sizes={list(plan.sample_sizes)}")
    eps = "n/a" if plan.epsilon_bound is None else f"{plan.epsilon_bound:.6g}"
    print(f"universe_bound={plan.universe_bound:.6g}  epsilon={eps}  "
          f"hardness_applies={plan.hardness_applies}")
    for v in plan.invariant_violations():
        print(f"warning: {v}")
    return 0


def cmd_reduce(args) -> int:
    inst = read_instance(args.input)
    plan = _load_plan(args.plan)
    out, trace = harden_pipeline(inst, plan, args.seed)
    write_instance(out, args.out)
    Path(args.trace).write_text(trace.to_json(indent=2))
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.input)
    th = Thresholds(as_fraction(args.j1), as_fraction(args.j2))
    if args.algo == "brute":
        outcome = brute_force_decide(inst, th)
    else:
        params = derive_lsh_params(inst.n, th, args.eta, args.seed)
        outcome = lsh_decide(inst, th, params)
    print(json.dumps(outcome.to_dict()))
    return EXIT_FOUND if outcome.is_found else EXIT_NONE


def cmd_verify(args) -> int:
    if args.experiment == "collisions":
        report = estimate_collision_rate(args.j_values, args.k, args.trials, args.seed)
        return _emit(report, args.csv)
    if args.plan is None:
        raise ValidationError(f"verify {args.experiment} needs --plan")
    plan = _load_plan(args.plan)
    if args.experiment == "envelope":
        report = verify_envelope(plan, args.n, args.trials, args.seed)
    else:
        report = verify_pipeline_equivalence(plan, args.n, args.trials, args.seed)
    return _emit(report, args.csv)


def cmd_bench(args) -> int:
    th = Thresholds(as_fraction(args.j1), as_fraction(args.j2))
    report = bench_scaling(args.algo, args.sizes, th, args.eta, args.seed, runs=args.runs)
    return _emit(report, args.csv)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcplab",
                                     description="Bichromatic closest pair under Jaccard similarity")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate an instance from a JSON generator spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plan", help="compute a hardening plan")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--j1", type=float, required=True)
    p.add_argument("--j2", type=float, required=True)
    p.add_argument("--gamma", type=float, default=None, help="pin gamma instead of deriving it")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("reduce", help="run the hardening pipeline on an instance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("solve", help="decide an instance (exit 0 found, 1 none, 2 error)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--j1", type=float, required=True)
    p.add_argument("--j2", type=float, required=True)
    p.add_argument("--algo", choices=("brute", "lsh"), required=True)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run a certification experiment")
    p.add_argument("experiment", choices=("envelope", "pipeline", "collisions"))
    p.add_argument("--plan")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--j-values", type=_float_list, default=[1 / 3, 1 / 2, 2 / 3],
                   help="collisions only: comma-separated Jaccard values")
    p.add_argument("--k", type=int, default=1, help="collisions only: concatenation length")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="runtime scaling benchmark")
    p.add_argument("--algo", choices=("brute", "lsh"), required=True)
    p.add_argument("--sizes", type=_int_list, required=True)
    p.add_argument("--j1", type=float, required=True)
    p.add_argument("--j2", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
