"""Command-line front end: print tableaus, run integrations, launch campaigns."""

from __future__ import annotations

import argparse
import os
import sys as _sys

import numpy as np

from .dynamics import kepler_system, quartic_oscillator
from .experiments import (
    PERIOD,
    convergence_study,
    drift_study,
    write_convergence_csv,
    write_convergence_plot,
    write_drift_csv,
    write_drift_plot,
    write_step_csv,
)
from .integrator import IntegrationError, SolverConfig, integrate_adaptive, integrate_fixed
from .tableau import KINDS, MethodSpec, build_tableau, format_tableau, tableau_csv

__all__ = [
    "MethodParseError",
    "UnknownKind",
    "MissingParameter",
    "InvalidCombination",
    "parse_method",
    "parse_method_list",
    "format_method",
    "main",
]

CONVERGENCE_METHODS = "gauss:s=3,hbvm:k=4,s=3,hbvm:k=6,s=3,hbvm:k=9,s=3,hbvm:k=12,s=3,equip:s=3"
DRIFT_METHODS = "gauss:s=3,hbvm:k=12,s=3,equip:s=3"
CONVERGENCE_DIVISORS = "50,70,100,140,200"


class MethodParseError(ValueError):
    """A method string does not follow kind:key=value,... grammar."""


class UnknownKind(MethodParseError):
    pass


class MissingParameter(MethodParseError):
    pass


class InvalidCombination(MethodParseError):
    pass


def parse_method(text: str) -> MethodSpec:
    """Parse 'gauss:s=3', 'hbvm:k=6,s=3' or 'equip:s=3' (kind is case-insensitive)."""
    kind, sep, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if kind not in KINDS:
        raise UnknownKind(f"unknown method kind {kind!r} in {text!r}")
    params: dict[str, int] = {}
    if sep and rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            key = key.strip().lower()
            if not eq or key not in ("s", "k"):
                raise MethodParseError(f"bad parameter {item!r} in {text!r}")
            try:
                params[key] = int(value)
            except ValueError:
                raise MethodParseError(f"parameter {key}={value!r} is not an integer") from None
    if "s" not in params:
        raise MissingParameter(f"{kind} requires s (got {text!r})")
    if kind == "hbvm" and "k" not in params:
        raise MissingParameter(f"hbvm requires k (got {text!r})")
    try:
        if kind == "hbvm":
            return MethodSpec(kind=kind, s=params["s"], k=params["k"])
        if "k" in params:
            raise InvalidCombination(f"{kind} does not take k (got {text!r})")
        return MethodSpec(kind=kind, s=params["s"])
    except ValueError as exc:
        raise InvalidCombination(str(exc)) from None


def format_method(spec: MethodSpec) -> str:
    """Inverse of parse_method."""
    return str(spec)


def parse_method_list(text: str) -> list[MethodSpec]:
    """Split a comma-separated list; a new method starts at each kind: token."""
    groups: list[str] = []
    for token in text.split(","):
        if ":" in token or not groups:
            groups.append(token)
        else:
            groups[-1] += "," + token
    return [parse_method(g) for g in groups]


def _write_or_discard(path, writer):
    try:
        writer(path)
    except OSError:
        if os.path.exists(path):
            os.unlink(path)
        raise


def _cmd_tableau(args) -> int:
    spec = parse_method(args.method)
    tab = build_tableau(spec, alpha=args.alpha)
    print(tableau_csv(tab) if args.csv else format_tableau(tab), end="")
    if not args.csv:
        print()
    return 0


def _get_problem(args):
    if args.problem == "kepler":
        return kepler_system(args.e)
    return quartic_oscillator()


def _cmd_run(args) -> int:
    spec = parse_method(args.method)
    sys_, state0 = _get_problem(args)
    cfg = SolverConfig()
    if args.h is not None:
        if args.steps is None:
            raise ValueError("--h requires --steps")
        records = integrate_fixed(spec, sys_, state0.y, args.h, args.steps, cfg)
    else:
        if args.periods is None:
            raise ValueError("--tol requires --periods")
        records = integrate_adaptive(spec, sys_, state0.y, args.periods * PERIOD,
                                     args.tol, cfg)
    _write_or_discard(args.out, lambda p: write_step_csv(records, p, sys_, state0.y))
    print(f"wrote {len(records)} steps to {args.out}")
    return 0


def _cmd_convergence(args) -> int:
    methods = parse_method_list(args.methods)
    divisors = [int(d) for d in args.h_divisors.split(",")]
    if any(d < 1 for d in divisors):
        raise ValueError("stepsize divisors must be positive")
    h_grid = [PERIOD / d for d in divisors]
    results = convergence_study(methods, args.e, args.periods, h_grid, SolverConfig())
    csv_path = args.out + ".csv"
    _write_or_discard(csv_path, lambda p: write_convergence_csv(results, p))
    print(f"wrote {csv_path}")
    for res in results:
        slope = "n/a" if np.isnan(res.slope) else f"{res.slope:.3f}"
        print(f"  {res.method} {res.observable}: slope {slope}")
    if args.plot:
        gp_path = args.out + ".gp"
        _write_or_discard(gp_path, lambda p: write_convergence_plot(csv_path, p, results))
        print(f"wrote {gp_path}")
    return 0


def _cmd_drift(args) -> int:
    methods = parse_method_list(args.methods)
    reports = drift_study(methods, args.e, args.periods, args.tol, SolverConfig())
    csv_path = args.out + ".csv"
    _write_or_discard(csv_path, lambda p: write_drift_csv(reports, p))
    print(f"wrote {csv_path}")
    for rep in reports:
        print(f"  {rep.method} {rep.invariant}: {rep.verdict}")
    if args.plot:
        gp_path = args.out + ".gp"
        _write_or_discard(gp_path, lambda p: write_drift_plot(csv_path, p, reports))
        print(f"wrote {gp_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geork",
        description="Geometric Runge-Kutta integrators: Gauss, HBVM and EQUIP methods "
                    "with Kepler benchmark campaigns.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_tab = sub.add_parser("tableau", help="construct and print a Butcher tableau")
    p_tab.add_argument("--method", required=True,
                       help="method spec, e.g. gauss:s=3, hbvm:k=6,s=3, equip:s=3")
    p_tab.add_argument("--alpha", type=float, default=0.0,
                       help="tableau parameter for equip (default 0)")
    p_tab.add_argument("--csv", action="store_true", help="machine-readable output")
    p_tab.set_defaults(func=_cmd_tableau)

    p_run = sub.add_parser("run", help="integrate one trajectory and write a step CSV")
    p_run.add_argument("--method", required=True)
    p_run.add_argument("--problem", choices=("kepler", "quartic"), default="kepler")
    p_run.add_argument("--e", type=float, default=0.6, help="Kepler eccentricity")
    mode = p_run.add_mutually_exclusive_group(required=True)
    mode.add_argument("--h", type=float, help="fixed stepsize (with --steps)")
    mode.add_argument("--tol", type=float, help="adaptive tolerance (with --periods)")
    p_run.add_argument("--steps", type=int, help="number of fixed steps")
    p_run.add_argument("--periods", type=float, help="adaptive run length in units of 2*pi")
    p_run.add_argument("--out", required=True, help="output CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence", help="fixed-step order/error-constant study")
    p_conv.add_argument("--methods", default=CONVERGENCE_METHODS)
    p_conv.add_argument("--e", type=float, default=0.6)
    p_conv.add_argument("--periods", type=int, default=10)
    p_conv.add_argument("--h-divisors", default=CONVERGENCE_DIVISORS,
                        help="stepsizes as 2*pi/d for each divisor d")
    p_conv.add_argument("--out", default="geork-convergence", help="output path prefix")
    p_conv.add_argument("--plot", action="store_true", help="also emit a gnuplot script")
    p_conv.set_defaults(func=_cmd_convergence)

    p_drift = sub.add_parser("drift", help="adaptive-step invariant drift study")
    p_drift.add_argument("--methods", default=DRIFT_METHODS)
    p_drift.add_argument("--e", type=float, default=0.99)
    p_drift.add_argument("--tol", type=float, default=1e-8)
    p_drift.add_argument("--periods", type=int, default=20)
    p_drift.add_argument("--out", default="geork-drift", help="output path prefix")
    p_drift.add_argument("--plot", action="store_true", help="also emit a gnuplot script")
    p_drift.set_defaults(func=_cmd_drift)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MethodParseError, ValueError, IntegrationError, OSError) as exc:
        print(f"geork {args.subcommand}: error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
