#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot paths (single Thomas solves and the implicit-Euler
evolution loop) on transition operators assembled from a representative
diffusive model.  Run after ``pip install -e .``:

    python benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from r0kit import ModelSpec, RateFunction, assemble_operator, grid_for_model
from r0kit._kernels import _fallback

try:
    from r0kit._kernels import _core
except ImportError:
    _core = None


def _operator(n):
    m = ModelSpec(0.0, math.inf, RateFunction.constant(1.0),
                  RateFunction.constant(1.0), RateFunction.constant(2.0), D=2.0)
    return assemble_operator(m, grid_for_model(m, n))


def _time(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_thomas(backend, op, rhs, repeat):
    return _time(lambda: backend.thomas_solve(op.lower, op.diag, op.upper, rhs),
                 repeat)


def bench_evolve(backend, op, steps, repeat):
    n = op.n
    h = op.grid.spacing
    phi = np.zeros(n)
    phi[: max(1, n // 100)] = 1.0
    phi /= phi.sum() * h
    weights = np.full(n, 2.0 * h)
    u0 = np.exp(-op.grid.cell_centers)
    return _time(lambda: backend.evolve_implicit(
        op.lower, op.diag, op.upper, 1e-3, h, weights, phi, u0, steps, 50.0),
        repeat)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true",
                    help="small sizes only (smoke test)")
    ns = ap.parse_args(argv)

    sizes = (1024, 4096) if ns.quick else (1024, 4096, 16384)
    steps = 200 if ns.quick else 2000
    repeat = 3

    backends = [("python", _fallback)]
    if _core is not None:
        backends.append(("compiled", _core))
    else:
        print("compiled kernels not built; timing the fallback only")

    print(f"{'op':<22}{'n':>8}" + "".join(f"{name:>14}" for name, _ in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for n in sizes:
        op = _operator(n)
        rhs = np.random.default_rng(0).random(n)
        times = [bench_thomas(b, op, rhs, repeat) for _, b in backends]
        row = f"{'thomas_solve':<22}{n:>8}" + "".join(f"{t * 1e6:>12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    for n in sizes:
        op = _operator(n)
        times = [bench_evolve(b, op, steps, repeat) for _, b in backends]
        row = f"{f'evolve[{steps} steps]':<22}{n:>8}" + \
            "".join(f"{t * 1e3:>12.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
