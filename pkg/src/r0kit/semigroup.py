"""Time-domain evolution u' = (B_k - M) u for sign cross-checks between
R0 - 1 and the Malthusian growth exponent, plus mass-conservation
diagnostics.

The default scheme is backward Euler with the rank-one birth term treated
explicitly: the transition solve stays tridiagonal and the step map is
nonnegativity-preserving (inverse of an M-matrix applied to a nonnegative
vector).  Crank-Nicolson is available behind a flag for convergence
studies; it trades the unconditional positivity away for second order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

import warnings as _warnings

from . import _kernels
from .discrete import (DiscreteOperator, Field, Grid, assemble_operator,
                       grid_for_model, transpose_apply_inverse)
from .errors import ConvergenceError, InstabilityError, SolverError
from .model import ModelSpec, MollifierFamily
from .nextgen import birth_functional, mollifier_density


def _warn_stability(dt: float, bound: float):
    _warnings.warn(f"dt*||L M^-1|| = {dt * bound:.3g} >= 1: the explicit "
                   "birth term may destabilize the run", stacklevel=3)

#: mass growing faster than exp(GROWTH_GUARD * t) aborts a run
GROWTH_GUARD = 10.0

#: |R0_k - 1| and |malthus| below this count as the critical boundary
CRITICAL_BAND = 5e-3


@dataclass(frozen=True)
class EvolutionState:
    field: Field
    time: float
    mass_history: np.ndarray  # rows (t, mass)


@dataclass(frozen=True)
class SignConsistency:
    r0_k: float
    malthus: float
    consistent: bool


def initial_state(m: ModelSpec, g: Grid) -> EvolutionState:
    """Unit-mass exponential profile; any nonnegative start works, this one
    keeps subcritical runs above underflow a little longer."""
    xc = g.cell_centers
    vals = np.exp(-(xc - g.x_left))
    vals /= vals.sum() * g.spacing
    f = Field(values=vals, grid=g)
    return EvolutionState(field=f, time=0.0,
                          mass_history=np.array([[0.0, f.mass()]]))


def _birth_pieces(m: ModelSpec, fam: Optional[MollifierFamily], k: int,
                  g: Grid) -> tuple[np.ndarray, np.ndarray]:
    if fam is None or k <= 0:
        return np.zeros(g.n_cells), np.zeros(g.n_cells)
    L = birth_functional(m, g)
    return L.weights, mollifier_density(fam, k, g)


def evolve(m: ModelSpec, fam: Optional[MollifierFamily], k: int,
           state: EvolutionState, dt: float, n_steps: int,
           scheme: str = "implicit-euler",
           op: Optional[DiscreteOperator] = None) -> EvolutionState:
    """Advance the state n_steps; mass history is appended per step.

    The explicit birth term is stable whenever dt * ||L M^{-1}|| < 1; that
    bound is cheap to check and runs once at setup (a warning, not an error,
    since the runaway guard catches genuine blowups).
    """
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and at least one step")
    g = state.field.grid
    if op is None:
        op = assemble_operator(m, g)
    if op.jump is not None:
        raise SolverError("time stepping expects the rank-one birth form, "
                          "not the interior-jump operator")
    weights, phi = _birth_pieces(m, fam, k, g)
    if np.any(weights):
        # explicit birth term: stable for dt * ||L M^{-1}|| < 1
        bound = float(np.max(transpose_apply_inverse(op, weights))) / g.spacing
        if dt * bound >= 1.0:
            _warn_stability(dt, bound)

    if scheme == "implicit-euler":
        try:
            u, masses = _kernels.evolve_implicit(
                op.lower, op.diag, op.upper, dt, g.spacing,
                np.ascontiguousarray(weights), np.ascontiguousarray(phi),
                np.ascontiguousarray(state.field.values, dtype=float),
                int(n_steps), GROWTH_GUARD)
        except _kernels.SingularSolve as exc:
            raise SolverError(str(exc)) from exc
        except RuntimeError as exc:
            raise InstabilityError(str(exc)) from exc
    elif scheme == "crank-nicolson":
        u, masses = _crank_nicolson(op, dt, weights, phi,
                                    state.field.values, n_steps, g.spacing)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    times = state.time + dt * np.arange(n_steps + 1)
    history = np.vstack([state.mass_history,
                         np.column_stack([times[1:], masses[1:]])])
    return EvolutionState(field=Field(values=u, grid=g),
                          time=float(times[-1]), mass_history=history)


def _crank_nicolson(op, dt, weights, phi, u0, n_steps, h):
    half = 0.5 * dt
    factors = _kernels.thomas_factor(half * op.lower, 1.0 + half * op.diag,
                                     half * op.upper)
    u = np.array(u0, dtype=float)
    masses = np.empty(n_steps + 1)
    masses[0] = h * u.sum()
    for step in range(n_steps):
        births = dt * float(weights @ u)
        rhs = u - half * op.matvec(u) + births * phi
        u = _kernels.thomas_solve_factored(factors, rhs)
        masses[step + 1] = h * u.sum()
        if masses[step + 1] > max(masses[0], 1e-300) * math.exp(
                GROWTH_GUARD * dt * (step + 1)):
            raise InstabilityError("mass outran the growth guard")
    return u, masses


def step(m: ModelSpec, fam: Optional[MollifierFamily], k: int,
         state: EvolutionState, dt: float,
         scheme: str = "implicit-euler") -> EvolutionState:
    """Single time step (see evolve)."""
    return evolve(m, fam, k, state, dt, 1, scheme=scheme)


def malthus_estimate(m: ModelSpec, fam: MollifierFamily, k: int,
                     T: Optional[float] = None, dt: Optional[float] = None,
                     grid_n: int = 1024, g: Optional[Grid] = None) -> float:
    """Dominant growth exponent: least-squares slope of log(mass) over the
    final third of [0, T].

    T defaults to 50 mortality e-folding times so the transient has decayed;
    raises ConvergenceError when the population underflows before the fit
    window opens (deeply subcritical runs).
    """
    if g is None:
        g = grid_for_model(m, grid_n)
    if T is None:
        mu_min = float(np.min(m.mu_at(g.cell_centers)))
        if mu_min <= 0:
            raise ValueError("default horizon needs positive mortality")
        T = 50.0 / mu_min
    if dt is None:
        dt = T / 25_000
    n_steps = max(int(round(T / dt)), 9)

    state = evolve(m, fam, k, initial_state(m, g), dt, n_steps)
    t = state.mass_history[:, 0]
    mass = state.mass_history[:, 1]
    i0 = (2 * len(t)) // 3
    if np.any(mass[: i0 + 1] < 1e-280):
        raise ConvergenceError("population underflowed before the fit window")
    design = np.column_stack([t[i0:], np.ones(len(t) - i0)])
    slope, _ = np.linalg.lstsq(design, np.log(mass[i0:]), rcond=None)[0]
    return float(slope)


def sign_consistency(m: ModelSpec, fam: MollifierFamily, k: int,
                     grid_n: int = 1024, **malthus_kwargs) -> SignConsistency:
    """Check sign(R0_k - 1) against the Malthus estimate's sign.

    Both quantities sitting inside the critical band |.| < 5e-3 also counts
    as consistent (the exactly critical case).
    """
    from .nextgen import r0_rank_one

    g = grid_for_model(m, max(grid_n, 1024))
    r0k = r0_rank_one(m, fam, k, g)
    malthus = malthus_estimate(m, fam, k, g=g, **malthus_kwargs)
    gap = r0k - 1.0
    consistent = (gap > 0 and malthus > 0) or (gap < 0 and malthus < 0) or (
        abs(gap) < CRITICAL_BAND and abs(malthus) < CRITICAL_BAND)
    return SignConsistency(r0_k=r0k, malthus=malthus, consistent=consistent)
