"""Command line entry point: ``quasipush <command> ...``.

Exit codes: 0 success, 1 a validation check failed, 2 configuration
error, 3 simulation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DegenerateData, NotPSD, QuasiPushError
from .limit_surface import Normalization, fit_quadratic, load_limit_surface, read_pairs, save_limit_surface, write_pairs
from .outputs import FORMATS, emit_outputs
from .simulation import Scenario, run_batch
from .support_oracle import SupportModel, generate_pairs

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3


def _formats(text: str) -> list:
    items = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in items if s not in FORMATS]
    if bad:
        raise ConfigError(f"unknown formats {bad}; choose from {', '.join(FORMATS)}")
    return items


def cmd_simulate(args) -> int:
    sc = Scenario.load(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    formats = _formats(args.formats)
    summary, records = run_batch(sc, args.n, workers=args.workers)
    written = emit_outputs(records, args.out, formats, summary)
    counts = ", ".join(f"{k} {v}" for k, v in summary["status_counts"].items() if v)
    print(f"{sc.name}: {len(records)} rollouts ({counts})")
    for p in written:
        print(f"  wrote {p}")
    return EXIT_OK


def cmd_fit_quadratic(args) -> int:
    F, V = read_pairs(args.pairs)
    if args.f_max is None or args.tau_max is None:
        f_max = args.f_max or float(np.max(np.linalg.norm(F[:, :2], axis=1)))
        tau_max = args.tau_max or float(np.max(np.abs(F[:, 2])))
    else:
        f_max, tau_max = args.f_max, args.tau_max
    norm = Normalization(f_max, tau_max)
    ls = fit_quadratic(norm.wrench_to_unit(F), norm.twist_to_unit(V), normalization=norm)
    save_limit_surface(ls, args.out)
    print(f"fitted A from {len(F)} pairs (f_max={f_max:.6g}, tau_max={tau_max:.6g}) -> {args.out}")
    return EXIT_OK


def cmd_gen_pairs(args) -> int:
    support = SupportModel.load(args.support)
    F_unit, V_unit = generate_pairs(support, args.n, np.random.default_rng(args.seed))
    norm = support.normalization
    write_pairs(args.out, norm.wrench_from_unit(F_unit), norm.twist_from_unit(V_unit))
    print(f"wrote {args.n} pairs to {args.out} (f_max=1, tau_max={norm.tau_max:.6g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import validate_limit_surface

    ls = load_limit_surface(args.ls)
    report = validate_limit_surface(ls, n=args.n, seed=args.seed)
    ok = True
    for name, (passed, detail) in report.items():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    if args.json:
        Path(args.json).write_text(json.dumps({k: {"pass": p, "detail": d} for k, (p, d) in report.items()},
                                              indent=1) + "\n")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasipush", description="Quasi-static stochastic pushing and grasping.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario batch and write outputs")
    s.add_argument("--scenario", required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default="out")
    s.add_argument("--formats", default="csv,json,svg")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit-quadratic", help="fit a quadratic limit surface to wrench/twist pairs")
    s.add_argument("--pairs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--f-max", type=float, default=None)
    s.add_argument("--tau-max", type=float, default=None)
    s.set_defaults(func=cmd_fit_quadratic)

    s = sub.add_parser("gen-pairs", help="sample wrench/twist pairs from a support model")
    s.add_argument("--support", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_pairs)

    s = sub.add_parser("validate", help="check a limit-surface file against its invariants")
    s.add_argument("--ls", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", default=None, help="also write the report as JSON")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DegenerateData, NotPSD, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuasiPushError, ArithmeticError, OSError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
