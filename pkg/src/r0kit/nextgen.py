"""Reproduction numbers through the next-generation construction.

For a rank-one birth operator B u = (L u) * phi the next-generation operator
B M^{-1} has the single nonzero eigenvalue L(M^{-1} phi), so the spectral
radius is one functional evaluation against one linear solve.  Concentrating
the offspring density phi_k at the birth state and extrapolating the
resulting sequence R0_k gives the reproduction number of the limit model in
which births enter as a boundary (or interior flux-jump) condition.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .discrete import (DiscreteOperator, Field, Grid, assemble_operator,
                       sample_weights, solve_inverse, transpose_apply_inverse)
from .errors import ConvergenceError, GridTooCoarseError
from .model import ModelSpec, MollifierFamily, mollifier_cell_masses

#: default concentration schedule (geometric, ratio 2)
DEFAULT_K_SCHEDULE = (8, 16, 32, 64, 128, 256)

#: grid must put at least this many cells inside the mollifier width 1/k
CELLS_PER_MOLLIFIER = 4

#: additive floor for extrapolation error estimates: tridiagonal solves at
#: n ~ 1e4 carry condition numbers ~ 1e5, so differences below this are
#: indistinguishable from roundoff
ERROR_ESTIMATE_FLOOR = 1e-10


class BirthKind(enum.Enum):
    INTEGRAL_BETA = "integral-beta"
    POINT_SAMPLE = "point-sample"


@dataclass(frozen=True)
class BirthFunctional:
    """Positive linear functional L giving the population birth rate.

    INTEGRAL_BETA:  L u = integral beta u  (midpoint rule on cell averages).
    POINT_SAMPLE:   L u = multiplicity * gamma(p) * u(p)  (division models,
    quadratic interpolation at p).
    """

    kind: BirthKind
    weights: np.ndarray

    def apply(self, u) -> float:
        values = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
        return float(self.weights @ values)


def birth_functional(m: ModelSpec, g: Grid) -> BirthFunctional:
    """The model's birth functional discretized on the grid."""
    if m.birth_sample_point is not None:
        p = m.birth_sample_point
        w = m.birth_multiplicity * float(m.gamma_at(p)) * sample_weights(g, p)
        return BirthFunctional(BirthKind.POINT_SAMPLE, w)
    beta = np.asarray(m.beta_at(g.cell_centers), dtype=float)
    return BirthFunctional(BirthKind.INTEGRAL_BETA, beta * g.spacing)


@dataclass(frozen=True)
class R0Report:
    value: float
    method: str
    k_sequence: Optional[tuple[tuple[int, float], ...]] = None
    extrapolation_error_estimate: Optional[float] = None
    grid_n: Optional[int] = None
    warnings: tuple[str, ...] = ()


def mollifier_density(fam: MollifierFamily, k: int, g: Grid) -> np.ndarray:
    """phi_k as exact unit-mass cell averages (density per cell)."""
    return mollifier_cell_masses(fam, k, g.face_positions) / g.spacing


def _require_resolved(g: Grid, k: int):
    if g.spacing > 1.0 / (CELLS_PER_MOLLIFIER * k):
        raise GridTooCoarseError(
            f"grid spacing {g.spacing:.3g} cannot resolve the mollifier width "
            f"1/{k}; need spacing <= 1/({CELLS_PER_MOLLIFIER}*k)")


def r0_rank_one(m: ModelSpec, fam: MollifierFamily, k: int, g: Grid,
                op: Optional[DiscreteOperator] = None,
                L: Optional[BirthFunctional] = None) -> float:
    """Spectral radius of the rank-one next-generation operator: L(M^{-1} phi_k).

    The grid must resolve the mollifier (spacing <= 1/(4k)); the operator and
    functional can be passed in to amortize assembly over a k-schedule.
    """
    _require_resolved(g, k)
    if op is None:
        op = assemble_operator(m, g)
    if L is None:
        L = birth_functional(m, g)
    phi = mollifier_density(fam, k, g)
    return L.apply(solve_inverse(op, phi))


def _fit_order(ks: Sequence[int], values: Sequence[float]) -> Optional[float]:
    """Observed convergence order p from the last three entries, assuming
    R_k = R + C k^{-p} on a geometric schedule."""
    d1 = values[-2] - values[-3]
    d2 = values[-1] - values[-2]
    if d2 == 0.0 or d1 == 0.0 or d1 * d2 < 0:
        return None
    ratio = ks[-1] / ks[-2]
    if ratio <= 1:
        return None
    return math.log(abs(d1 / d2)) / math.log(ratio)


def r0_limit(m: ModelSpec, fam: MollifierFamily,
             k_schedule: Sequence[int] = DEFAULT_K_SCHEDULE,
             g: Optional[Grid] = None, grid_n: int = 4096) -> R0Report:
    """Extrapolated limit of the R0_k sequence along a concentration schedule.

    Richardson extrapolation assumes a first-order error in 1/k; the order is
    fitted from the last three points and when it strays from 1 by more than
    0.5 the raw last value is reported instead, with a warning (constant
    fertility gives a k-independent sequence, diffusive models converge at
    second order).  Schedule entries the grid cannot resolve are dropped with
    a warning.  The error estimate is the difference of the last two
    extrapolants (or raw values), floored at solver roundoff scale.
    """
    if g is None:
        from .discrete import grid_for_model
        g = grid_for_model(m, grid_n)
    ks = sorted(set(int(k) for k in k_schedule))
    if not ks:
        raise ValueError("empty concentration schedule")
    warnings: list[str] = []

    usable = [k for k in ks if g.spacing <= 1.0 / (CELLS_PER_MOLLIFIER * k)]
    if not usable:
        raise GridTooCoarseError(
            f"grid spacing {g.spacing:.3g} resolves none of the schedule {ks}")
    if len(usable) < len(ks):
        dropped = sorted(set(ks) - set(usable))
        warnings.append(f"schedule trimmed to k<={usable[-1]} by the "
                        f"grid resolution rule (dropped {dropped})")

    op = assemble_operator(m, g)
    L = birth_functional(m, g)
    seq = [(k, r0_rank_one(m, fam, k, g, op=op, L=L)) for k in usable]
    values = [v for _, v in seq]
    scale = max(abs(values[-1]), 1.0)
    floor = ERROR_ESTIMATE_FLOOR * scale

    if len(values) == 1:
        warnings.append("single-entry schedule: no extrapolation performed")
        return R0Report(value=values[-1], method="green_limit",
                        k_sequence=tuple(seq), extrapolation_error_estimate=None,
                        grid_n=g.n_cells, warnings=tuple(warnings))

    diffs = np.diff(values)
    if np.max(np.abs(diffs)) <= floor:
        # k-independent to roundoff (e.g. constant fertility): nothing to fit
        return R0Report(value=values[-1], method="green_limit",
                        k_sequence=tuple(seq),
                        extrapolation_error_estimate=floor,
                        grid_n=g.n_cells, warnings=tuple(warnings))

    tail = np.sign(diffs[max(0, len(diffs) - 3):])
    if len(diffs) >= 2 and not (np.all(tail >= 0) or np.all(tail <= 0)):
        warnings.append("R0_k sequence is not eventually monotone")

    order = _fit_order(usable, values) if len(values) >= 3 else 1.0
    if order is None or abs(order - 1.0) > 0.5:
        tag = f"{order:.2f}" if order is not None else "indeterminate"
        warnings.append(f"observed k-order {tag} is incompatible with 1/k; "
                        "reporting the raw last value")
        estimate = max(abs(values[-1] - values[-2]), floor)
        return R0Report(value=values[-1], method="green_limit",
                        k_sequence=tuple(seq), extrapolation_error_estimate=estimate,
                        grid_n=g.n_cells, warnings=tuple(warnings))

    # first-order Richardson: R = (k2 R2 - k1 R1)/(k2 - k1), exact for R + C/k
    extrap = [(k2 * v2 - k1 * v1) / (k2 - k1)
              for (k1, v1), (k2, v2) in zip(seq, seq[1:])]
    estimate = max(abs(extrap[-1] - extrap[-2]) if len(extrap) >= 2
                   else abs(extrap[-1] - values[-1]), floor)
    return R0Report(value=extrap[-1], method="green_limit", k_sequence=tuple(seq),
                    extrapolation_error_estimate=estimate, grid_n=g.n_cells,
                    warnings=tuple(warnings))


def spectral_radius(matrix: np.ndarray, tol: float = 1e-12,
                    max_iter: int = 10_000) -> float:
    """Power iteration with a Rayleigh-quotient estimate for the dominant
    eigenvalue of an (elementwise nonnegative) matrix.

    Such matrices have a real dominant eigenvalue, so the iteration cannot
    rotate; the stall guard is kept anyway and raises ConvergenceError.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    if n == 1:
        return abs(float(a[0, 0]))
    x = np.full(n, 1.0 / math.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        y = a @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x_new = y / norm
        ax = a @ x_new
        lam_new = float(x_new @ ax)
        residual = float(np.linalg.norm(ax - lam_new * x_new))
        if (abs(lam_new - lam) <= tol * max(1.0, abs(lam_new))
                and residual <= math.sqrt(tol) * max(1.0, abs(lam_new))):
            return abs(lam_new)
        lam, x = lam_new, x_new
    raise ConvergenceError("power iteration stalled before tolerance")


def r0_finite_rank(m: ModelSpec, functionals: Sequence[BirthFunctional],
                   densities: Sequence[Field], g: Grid) -> float:
    """Spectral radius of the finite-rank next-generation operator
    B u = sum_i (L_i u) phi_i: the r x r matrix K_ij = L_i(M^{-1} phi_j).

    For r = 1 this reduces to r0_rank_one up to machine precision.
    """
    if len(functionals) != len(densities) or not functionals:
        raise ValueError("need matching, nonempty functional/density arrays")
    op = assemble_operator(m, g)
    images = [solve_inverse(op, phi) for phi in densities]
    K = np.array([[L.apply(img) for img in images] for L in functionals])
    return spectral_radius(K)


def r0_upper_bound(m: ModelSpec, fam: MollifierFamily, k: int, g: Grid) -> float:
    """Guaranteed discrete upper bound: the birth functional applied to the
    worst nonnegative unit-mass column of M^{-1}, which dominates L(M^{-1} phi)
    for every unit-mass nonnegative phi (so it dominates r0_rank_one).

    One transpose solve evaluates the functional on all Green's columns at
    once; the mollifier enters only through its unit mass.
    """
    _require_resolved(g, k)
    op = assemble_operator(m, g)
    L = birth_functional(m, g)
    y = transpose_apply_inverse(op, L.weights)
    return float(np.max(y)) / g.spacing
