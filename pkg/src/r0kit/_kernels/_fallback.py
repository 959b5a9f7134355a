"""Pure-Python kernel backend.

Single tridiagonal solves run the Thomas algorithm in plain Python (with the
same pivot guard as the compiled version); the repeated-solve time-stepping
loop leans on LAPACK's tridiagonal factorization (dgttrf/dgttrs) so that long
runs stay usable without the extension.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

PIVOT_FLOOR = 1e-300


class SingularSolve(Exception):
    pass


def backend_name() -> str:
    return "python"


def thomas_solve(lower, diag, upper, rhs):
    """Thomas algorithm for the tridiagonal system with bands (lower, diag,
    upper); lower[0] and upper[n-1] are ignored."""
    n = len(diag)
    x = np.empty(n)
    cp = np.empty(n)
    piv = diag[0]
    if abs(piv) < PIVOT_FLOOR:
        raise SingularSolve("zero pivot in row 0")
    cp[0] = upper[0] / piv
    x[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if abs(piv) < PIVOT_FLOOR:
            raise SingularSolve(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = upper[i] / piv
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def thomas_factor(lower, diag, upper):
    dl = np.asarray(lower[1:], dtype=float)
    d = np.asarray(diag, dtype=float)
    du = np.asarray(upper[:-1], dtype=float)
    dlf, df, duf, du2f, ipiv, info = lapack.dgttrf(dl, d, du)
    if info != 0:
        raise SingularSolve(f"tridiagonal factorization failed (info={info})")
    return dlf, df, duf, du2f, ipiv


def thomas_solve_factored(factors, rhs):
    dlf, df, duf, du2f, ipiv = factors
    x, info = lapack.dgttrs(dlf, df, duf, du2f, ipiv, rhs)
    if info != 0:
        raise SingularSolve(f"tridiagonal solve failed (info={info})")
    return x


def evolve_implicit(lower, diag, upper, dt, h, birth_weights, birth_dist,
                    u0, n_steps, growth_cap):
    """Backward Euler for u' = -A u + (w.u) phi; see the compiled twin."""
    factors = thomas_factor(dt * lower, 1.0 + dt * diag, dt * upper)
    u = np.array(u0, dtype=float, copy=True)
    mass = np.empty(n_steps + 1)
    mass[0] = h * u.sum()
    mass0 = mass[0] if mass[0] > 0.0 else 1.0
    for step in range(n_steps):
        births = dt * float(birth_weights @ u)
        u = thomas_solve_factored(factors, u + births * birth_dist)
        mass[step + 1] = h * u.sum()
        cap = growth_cap * dt * (step + 1)
        if cap < 700.0 and mass[step + 1] > mass0 * np.exp(cap):
            raise RuntimeError(
                f"mass grew past the exp({growth_cap:g} t) guard at step {step + 1}")
    return u, mass
