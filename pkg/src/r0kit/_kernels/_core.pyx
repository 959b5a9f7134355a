# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Thomas tridiagonal solves and the implicit-Euler
time-stepping loop.  Mirrors the API of ``r0kit._kernels._fallback``."""

import numpy as np

cimport numpy as cnp

from r0kit._kernels._fallback import SingularSolve

cnp.import_array()

PIVOT_FLOOR = 1e-300


def backend_name():
    return "compiled"


def thomas_solve(double[::1] lower, double[::1] diag, double[::1] upper,
                 double[::1] rhs):
    """Solve the tridiagonal system with bands (lower, diag, upper).

    lower[0] and upper[n-1] are ignored.  No pivoting: callers pass
    diagonally dominant M-matrix systems.  Raises SingularSolve when a
    pivot magnitude drops below 1e-300.
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] x_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] c_arr = np.empty(n)
    cdef double[::1] x = x_arr
    cdef double[::1] cp = c_arr
    cdef double piv
    cdef Py_ssize_t i

    piv = diag[0]
    if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
        raise SingularSolve("zero pivot in row 0")
    cp[0] = upper[0] / piv
    x[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
            raise SingularSolve(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = upper[i] / piv
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]
    return x_arr


def thomas_factor(double[::1] lower, double[::1] diag, double[::1] upper):
    """Precompute the forward-elimination coefficients for repeated solves."""
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] cp_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] inv_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] invp = inv_arr
    cdef double piv
    cdef Py_ssize_t i

    piv = diag[0]
    if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
        raise SingularSolve("zero pivot in row 0")
    invp[0] = 1.0 / piv
    cp[0] = upper[0] * invp[0]
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
            raise SingularSolve(f"zero pivot in row {i}")
        invp[i] = 1.0 / piv
        cp[i] = upper[i] * invp[i] if i < n - 1 else 0.0
    return cp_arr, inv_arr, np.asarray(lower).copy()


def thomas_solve_factored(factors, double[::1] rhs):
    cdef double[::1] cp = factors[0]
    cdef double[::1] invp = factors[1]
    cdef double[::1] lower = factors[2]
    cdef Py_ssize_t n = rhs.shape[0]
    cdef cnp.ndarray[double, ndim=1] x_arr = np.empty(n)
    cdef double[::1] x = x_arr
    cdef Py_ssize_t i
    x[0] = rhs[0] * invp[0]
    for i in range(1, n):
        x[i] = (rhs[i] - lower[i] * x[i - 1]) * invp[i]
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - cp[i] * x[i + 1]
    return x_arr


def evolve_implicit(double[::1] lower, double[::1] diag, double[::1] upper,
                    double dt, double h,
                    double[::1] birth_weights, double[::1] birth_dist,
                    double[::1] u0, Py_ssize_t n_steps, double growth_cap):
    """Run n_steps of backward Euler for u' = -A u + (w.u) phi.

    Solves (I + dt*A) u_new = u_old + dt*(w.u_old)*phi each step with a
    factorization computed once.  Returns (u_final, mass_history) where
    mass_history[j] = h * sum(u) after j steps (length n_steps + 1).
    Raises SingularSolve if the factorization breaks down and RuntimeError
    if the mass exceeds mass0 * exp(growth_cap * t) (instability guard).
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] cp_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] inv_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] lo_arr = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] u_arr = np.array(u0, copy=True)
    cdef cnp.ndarray[double, ndim=1] mass_arr = np.empty(n_steps + 1)
    cdef double[::1] cp = cp_arr
    cdef double[::1] invp = inv_arr
    cdef double[::1] lo = lo_arr
    cdef double[::1] u = u_arr
    cdef double[::1] mass = mass_arr
    cdef double piv, births, m, mass0, cap
    cdef Py_ssize_t i, step

    # factor I + dt*A
    piv = 1.0 + dt * diag[0]
    if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
        raise SingularSolve("zero pivot in row 0")
    invp[0] = 1.0 / piv
    cp[0] = dt * upper[0] * invp[0]
    for i in range(1, n):
        lo[i] = dt * lower[i]
        piv = 1.0 + dt * diag[i] - lo[i] * cp[i - 1]
        if piv < PIVOT_FLOOR and piv > -PIVOT_FLOOR:
            raise SingularSolve(f"zero pivot in row {i}")
        invp[i] = 1.0 / piv
        cp[i] = dt * upper[i] * invp[i] if i < n - 1 else 0.0
    lo[0] = 0.0

    m = 0.0
    for i in range(n):
        m += u[i]
    mass[0] = h * m
    mass0 = mass[0] if mass[0] > 0.0 else 1.0

    for step in range(n_steps):
        births = 0.0
        for i in range(n):
            births += birth_weights[i] * u[i]
        births *= dt
        # forward sweep on rhs = u + births*phi
        u[0] = (u[0] + births * birth_dist[0]) * invp[0]
        for i in range(1, n):
            u[i] = (u[i] + births * birth_dist[i] - lo[i] * u[i - 1]) * invp[i]
        for i in range(n - 2, -1, -1):
            u[i] = u[i] - cp[i] * u[i + 1]
        m = 0.0
        for i in range(n):
            m += u[i]
        mass[step + 1] = h * m
        cap = growth_cap * dt * (step + 1)
        if cap < 700.0 and mass[step + 1] > mass0 * np.exp(cap):
            raise RuntimeError(
                f"mass grew past the exp({growth_cap:g} t) guard at step {step + 1}")
    return u_arr, mass_arr
