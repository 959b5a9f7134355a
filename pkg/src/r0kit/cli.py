"""Command-line front end.

Subcommands: compute, converge, sweep-d, simulate, validate.  All CSV output
is deterministic: 12 significant digits, '.' decimal separator, LF line
endings, and a header recording the tool version, the command line and every
default that shaped the numbers.

Exit codes: 0 ok; 1 validation-suite failure; 2 parse/validation failure;
3 route disagreement beyond --tol; 4 solver failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from . import __version__, greens
from .analytic import analytic_r0, optimal_diffusion
from .checks import run_checks
from .discrete import grid_for_model, truncation_right
from .errors import (AssemblyError, ConvergenceError, GridTooCoarseError,
                     InstabilityError, QuadratureError, R0KitError,
                     SolverError, UnsupportedModelError)
from .heatkernel import r0_time_domain
from .model import (ModelSpec, MollifierFamily, MollifierKind, RateFamily,
                    load_model, validate_model)
from .nextgen import DEFAULT_K_SCHEDULE, r0_limit
from .semigroup import evolve, initial_state

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_INPUT = 2
EXIT_DISAGREE = 3
EXIT_SOLVER = 4

_FAMILIES = {
    "uniform": MollifierKind.UNIFORM_INDICATOR,
    "bump": MollifierKind.SMOOTH_BUMP,
    "triangular": MollifierKind.TRIANGULAR,
}

_SOLVER_ERRORS = (SolverError, AssemblyError, InstabilityError,
                  ConvergenceError, QuadratureError)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _pool() -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1))


class CsvReport:
    """Accumulates comment lines and data rows; writes LF-terminated text."""

    def __init__(self, command: str, args: list[str], defaults: dict):
        if args and args[0] == command:
            args = args[1:]
        flags = " ".join(args)
        self.lines = [f"# r0kit v{__version__} {command} {flags}".rstrip()]
        joined = " ".join(f"{k}={v}" for k, v in defaults.items())
        self.lines.append(f"# defaults: {joined}")

    def comment(self, text: str):
        self.lines.append(f"# {text}")

    def row(self, *cells):
        self.lines.append(",".join(
            _fmt(c) if isinstance(c, float) else str(c) for c in cells))

    def write(self, out_path: Optional[str]):
        text = "\n".join(self.lines) + "\n"
        if out_path:
            with open(out_path, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _load_and_validate(path: str) -> ModelSpec:
    try:
        m = load_model(path)
    except R0KitError as exc:
        raise SystemExit(_fail(EXIT_INPUT, f"cannot load model: {exc}"))
    violations = validate_model(m)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)
    return m


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _defaults(m: ModelSpec, ns) -> dict:
    d = {
        "grid-n": ns.grid_n,
        "k-schedule": "/".join(str(k) for k in ns.k_schedule),
        "family": ns.family,
        "truncation": "x0+max(12/|lambda2|,12*gamma_max/mu_min)",
    }
    try:
        d["x-right"] = _fmt(truncation_right(m))
    except R0KitError:
        pass
    return d


def _parse_k_schedule(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("k schedule must be comma-separated integers")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("k schedule entries must be positive")
    return ks


# ---------------------------------------------------------------- compute --

def cmd_compute(ns, argv) -> int:
    m = _load_and_validate(ns.model)
    fam = MollifierFamily.for_model(_FAMILIES[ns.family], m)
    wanted = ("analytic", "green-limit", "time-domain") if ns.method == "all" \
        else (ns.method,)
    rows = []  # (method, value-or-None, error-estimate, note)

    for method in wanted:
        try:
            if method == "analytic":
                rows.append((method, analytic_r0(m), 0.0, "closed form"))
            elif method == "green-limit":
                rep = r0_limit(m, fam, ns.k_schedule, grid_n=ns.grid_n)
                note = "; ".join(rep.warnings) or "extrapolated"
                rows.append((method, rep.value,
                             rep.extrapolation_error_estimate or 0.0, note))
            else:
                rows.append((method, r0_time_domain(m), 0.0, "propagator route"))
        except UnsupportedModelError as exc:
            if ns.method != "all":
                return _fail(EXIT_INPUT, f"{method}: {exc}")
            rows.append((method, None, None, f"unsupported: {exc}"))
        except _SOLVER_ERRORS as exc:
            return _fail(EXIT_SOLVER, f"{method}: {exc}")

    report = CsvReport("compute", argv, _defaults(m, ns))
    report.comment("method,r0,error_estimate,note")
    for method, value, est, note in rows:
        report.row(method, "" if value is None else float(value),
                   "" if est is None else float(est), note)

    values = [v for _, v, _, _ in rows if v is not None]
    spread = max(values) - min(values) if len(values) > 1 else 0.0
    if ns.method == "all":
        report.comment(f"route spread {_fmt(spread)} vs tol {_fmt(ns.tol)}")
    report.write(ns.out)
    if ns.method == "all" and spread > ns.tol:
        return _fail(EXIT_DISAGREE,
                     f"routes disagree by {spread:.3g} > tol {ns.tol:.3g}")
    return EXIT_OK


# --------------------------------------------------------------- converge --

def cmd_converge(ns, argv) -> int:
    m = _load_and_validate(ns.model)
    fam = MollifierFamily.for_model(_FAMILIES[ns.family], m)
    if len(ns.k_schedule) == 1:
        print("warning: single-entry schedule, no extrapolation", file=sys.stderr)
    try:
        rep = r0_limit(m, fam, ns.k_schedule, grid_n=ns.grid_n)
    except UnsupportedModelError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except _SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, str(exc))

    report = CsvReport("converge", argv, _defaults(m, ns))
    for w in rep.warnings:
        report.comment(f"warning: {w}")
    report.comment("k,r0_k,abs_gap_to_limit")
    for k, val in rep.k_sequence:
        report.row(k, float(val), abs(val - rep.value))
    report.row("limit", float(rep.value),
               float(rep.extrapolation_error_estimate or 0.0))
    report.write(ns.out)
    return EXIT_OK


# ---------------------------------------------------------------- sweep-d --

def cmd_sweep_d(ns, argv) -> int:
    m = _load_and_validate(ns.model)
    if ns.d_min <= 0 and ns.log_scale:
        return _fail(EXIT_INPUT, "log sweep needs d-min > 0")
    if ns.log_scale:
        ds = np.logspace(math.log10(ns.d_min), math.log10(ns.d_max), ns.n_points)
    else:
        ds = np.linspace(ns.d_min, ns.d_max, ns.n_points)

    def at(d: float) -> float:
        spec = ModelSpec(x0=m.x0, x_max=m.x_max, gamma=m.gamma, mu=m.mu,
                         beta=m.beta, D=float(d),
                         birth_multiplicity=m.birth_multiplicity,
                         birth_sample_point=m.birth_sample_point, x_left=m.x_left)
        return analytic_r0(spec)

    try:
        with _pool() as pool:
            values = list(pool.map(at, ds))
        best = optimal_diffusion(m.beta, m.mu.params[0]) \
            if m.mu.family is RateFamily.CONSTANT else None
    except UnsupportedModelError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except _SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, str(exc))

    report = CsvReport("sweep-d", argv, _defaults(m, ns))
    report.comment("D,r0")
    for d, v in zip(ds, values):
        report.row(float(d), float(v))
    if best is not None:
        if best.flat:
            report.comment("optimum: flat in D (constant objective)")
        elif best.boundary:
            report.comment(f"optimum: on the {best.boundary} boundary, "
                           f"r0={_fmt(best.r0_star)}")
        else:
            report.comment(f"optimum: D*={_fmt(best.d_star)} "
                           f"r0*={_fmt(best.r0_star)}")
    report.write(ns.out)
    return EXIT_OK


# ---------------------------------------------------------------- simulate --

def cmd_simulate(ns, argv) -> int:
    m = _load_and_validate(ns.model)
    fam = MollifierFamily.for_model(_FAMILIES[ns.family], m)
    n_steps = max(1, int(round(ns.t_final / ns.dt)))
    try:
        g = grid_for_model(m, ns.grid_n)
        state = evolve(m, fam, ns.k, initial_state(m, g), ns.dt, n_steps)
    except (UnsupportedModelError, GridTooCoarseError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    except _SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, str(exc))

    report = CsvReport("simulate", argv, _defaults(m, ns))
    report.comment("t,mass")
    history = state.mass_history[:: max(1, ns.record_every)]
    for t, mass in history:
        report.row(float(t), float(mass))
    if not np.array_equal(state.mass_history[-1], history[-1]):
        report.row(float(state.mass_history[-1][0]), float(state.mass_history[-1][1]))
    report.write(ns.out)
    return EXIT_OK


# ---------------------------------------------------------------- validate --

def cmd_validate(ns, argv) -> int:
    if ns.mutate == "lambda2-sign":
        greens._MUTATE_LAMBDA2_SIGN = True
        print("fault injection: lambda2 sign flipped (dev mode)", file=sys.stderr)
    try:
        results = run_checks(name_filter=ns.filter, seed=ns.seed)
    finally:
        greens._MUTATE_LAMBDA2_SIGN = False
    if not results:
        return _fail(EXIT_INPUT, f"no checks match filter {ns.filter!r}")

    width = max(len(r.name) for r in results)
    hard_failures = 0
    for r in results:
        if r.passed:
            status = "PASS "
        elif r.expected_fail:
            status = "XFAIL"
        else:
            status = "FAIL "
            hard_failures += 1
        print(f"{status} {r.name:<{width}}  {r.measured}")
        if not r.passed and r.detail:
            print(f"      {r.detail}")
    print(f"{len(results)} checks: "
          f"{sum(r.passed for r in results)} passed, {hard_failures} failed, "
          f"{sum((not r.passed) and r.expected_fail for r in results)} expected-fail")
    return EXIT_CHECKS if hard_failures else EXIT_OK


# ------------------------------------------------------------------- main --

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="r0kit",
        description="Reproduction numbers of structured population models "
                    "with concentrated states at birth.")
    parser.add_argument("--version", action="version",
                        version=f"r0kit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid-n", type=int, default=4096,
                        help="number of grid cells (default 4096)")
    common.add_argument("--family", choices=sorted(_FAMILIES),
                        default="uniform", help="mollifier family")
    common.add_argument("--k-schedule", type=_parse_k_schedule,
                        default=DEFAULT_K_SCHEDULE, metavar="K1,K2,...",
                        help="concentration schedule (default 8,...,256)")
    common.add_argument("--out", help="write CSV here instead of stdout")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for randomized subsets")
    common.add_argument("--tol", type=float, default=1e-3,
                        help="route agreement tolerance (used by compute --method all)")

    p = sub.add_parser("compute", parents=[common],
                       help="reproduction number by one or all routes")
    p.add_argument("model", help="model file path")
    p.add_argument("--method", choices=["analytic", "green-limit",
                                        "time-domain", "all"], default="all")
    p.set_defaults(handler=cmd_compute)

    p = sub.add_parser("converge", parents=[common],
                       help="R0_k table along the concentration schedule")
    p.add_argument("model")
    p.set_defaults(handler=cmd_converge)

    p = sub.add_parser("sweep-d", parents=[common],
                       help="R0 as a function of the diffusion coefficient")
    p.add_argument("model")
    p.add_argument("--d-min", type=float, default=1e-3)
    p.add_argument("--d-max", type=float, default=1e3)
    p.add_argument("--n-points", type=int, default=20)
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--log", dest="log_scale", action="store_true", default=True)
    scale.add_argument("--linear", dest="log_scale", action="store_false")
    p.set_defaults(handler=cmd_sweep_d)

    p = sub.add_parser("simulate", parents=[common],
                       help="time-domain run emitting the mass history")
    p.add_argument("model")
    p.add_argument("--k", type=int, default=64, help="mollifier concentration")
    p.add_argument("--t-final", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--record-every", type=int, default=10)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("validate", help="run the cross-route check suite")
    p.add_argument("--filter", help="substring filter on check name or tags")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutate", choices=["lambda2-sign"],
                   help="dev-mode fault injection: verify the suite notices")
    p.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = _build_parser().parse_args(argv)
    try:
        return ns.handler(ns, argv)
    except SystemExit as exc:  # argparse or _load_and_validate
        code = exc.code
        return code if isinstance(code, int) else EXIT_INPUT
    except R0KitError as exc:
        return _fail(EXIT_SOLVER, str(exc))


if __name__ == "__main__":
    sys.exit(main())
