"""Finite-volume discretization of the transition operator
M u = (gamma u - D u')' + mu u  on a uniform grid, its tridiagonal inverse,
and the numerical Green's columns.

The scheme is conservative by construction: every interior face flux enters
the two adjacent rows with opposite signs (the same floating-point number),
so column sums of the mu = 0 operator vanish exactly and total mass obeys
the boundary fluxes to machine precision.  Convective face values are
upwinded wherever the cell Peclet number gamma*h/D exceeds 2 (always when
D = 0), which keeps the matrix an M-matrix and the discrete inverse
positive.

Division-at-a-point models (an interior birth point fed by sampling the
density at a division size) are handled by a rank-one modification of the
base operator: the offspring flux is injected at the interior face and the
dividing mothers leave through a matching sink at the sampled cell, so the
modification vanishes when the birth functional is zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import AssemblyError, SolverError, UnsupportedModelError
from .greens import lambda_pair
from .model import ModelSpec

#: domain-truncation decay target: the kernel tail sits below exp(-DECAY_EXPONENT)
DECAY_EXPONENT = 12.0

#: Peclet threshold above which the convective face value is upwinded
PECLET_UPWIND = 2.0

#: relative residual accepted from solve_inverse (after one refinement step)
SOLVE_RESIDUAL_TOL = 1e-10


class BoundaryKind(enum.Enum):
    ROBIN_LEFT = "robin-left"          # gamma u - D u' = 0 at the left face
    NO_FLUX_BOTH = "no-flux-both"      # truncated semi-infinite domains
    OUTFLOW_RIGHT = "outflow-right"    # finite domains with division at x_max
    FLUX_JUMP_INTERIOR = "flux-jump-interior"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [x_left, x_right]."""

    x_left: float
    x_right: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 16:
            raise ValueError("need at least 16 cells")
        if not self.x_left < self.x_right:
            raise ValueError("empty grid interval")

    @property
    def spacing(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        h = self.spacing
        return self.x_left + (np.arange(self.n_cells) + 0.5) * h

    @property
    def face_positions(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.spacing

    def cell_of(self, x: float) -> int:
        i = int((x - self.x_left) / self.spacing)
        return min(max(i, 0), self.n_cells - 1)


@dataclass(frozen=True)
class Field:
    """Cell-averaged density on a grid."""

    values: np.ndarray
    grid: Grid

    def l1_norm(self) -> float:
        return self.grid.spacing * float(np.sum(np.abs(self.values)))

    def mass(self) -> float:
        return self.grid.spacing * float(np.sum(self.values))


@dataclass(frozen=True)
class JumpData:
    """Rank-one offspring injection A -> A + column (x) sample_weights.

    The column deposits -multiplicity * gamma(p)/h into the cell right of
    the jump face; sample_weights interpolate u at the division point p.
    The matching loss of the dividing mothers is the upwind outflow row of
    the base operator, so a zero birth functional recovers it exactly.
    """

    inject_row: int
    multiplicity: float
    gamma_p: float
    sample_weights: np.ndarray  # dense length-n, three nonzeros

    def column_vector(self, n: int, h: float) -> np.ndarray:
        col = np.zeros(n)
        col[self.inject_row] -= self.multiplicity * self.gamma_p / h
        return col


@dataclass(frozen=True)
class DiscreteOperator:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    grid: Grid
    bc_kind: BoundaryKind
    mu_values: np.ndarray
    jump: Optional[JumpData] = None

    @property
    def n(self) -> int:
        return len(self.diag)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.upper[:-1] * u[1:]
        out[1:] += self.lower[1:] * u[:-1]
        if self.jump is not None:
            col = self.jump.column_vector(self.n, self.grid.spacing)
            out += col * float(self.jump.sample_weights @ u)
        return out

    def to_dense(self) -> np.ndarray:
        a = (np.diag(self.diag) + np.diag(self.upper[:-1], 1)
             + np.diag(self.lower[1:], -1))
        if self.jump is not None:
            col = self.jump.column_vector(self.n, self.grid.spacing)
            a += np.outer(col, self.jump.sample_weights)
        return a


def truncation_right(m: ModelSpec) -> float:
    """Right endpoint for semi-infinite domains:
    x0 + max(12/|lambda2|, 12*gamma_max/mu_min), so the Green's kernel tail
    sits below exp(-12).  Finite domains are returned unchanged.
    """
    if not m.is_semi_infinite:
        return m.x_max
    span = 12.0
    for _ in range(3):  # iterate the probe window until the rule stabilizes
        xs = np.linspace(m.x0, m.x0 + span, 513)
        gamma_max = float(np.max(m.gamma_at(xs)))
        mu_min = float(np.min(m.mu_at(xs)))
        if mu_min <= 0:
            raise UnsupportedModelError("truncation rule needs mortality bounded below")
        reach = DECAY_EXPONENT * gamma_max / mu_min
        if m.D > 0:
            lam2 = lambda_pair(mu_min, m.D).lambda2
            reach = max(reach, DECAY_EXPONENT / abs(lam2))
        if reach <= span:
            return m.x0 + reach
        span = reach
    return m.x0 + span


def grid_for_model(m: ModelSpec, n_cells: int) -> Grid:
    x_left = m.x_left if m.x_left is not None else m.x0
    return Grid(x_left=x_left, x_right=truncation_right(m), n_cells=n_cells)


def assemble_operator(m: ModelSpec, g: Grid) -> DiscreteOperator:
    """Finite-volume transition operator with flux Phi = gamma u - D u'.

    The left face carries the homogeneous Robin condition gamma u - D u' = 0
    (zero total flux, exactly representable as a zero face flux).  The right
    face is no-flux on truncated semi-infinite domains and upwind outflow on
    finite domains whose division point sits at x_max.
    Raises AssemblyError when a row violates the M-matrix pattern.
    """
    n = g.n_cells
    h = g.spacing
    xc = g.cell_centers
    xf = g.face_positions[1:-1]
    gf = np.asarray(m.gamma_at(xf), dtype=float)
    mu = np.asarray(m.mu_at(xc), dtype=float)

    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)

    if m.D > 0:
        upwind = gf * h / m.D > PECLET_UPWIND
    else:
        upwind = np.ones(n - 1, dtype=bool)
    w_left = np.where(upwind, 1.0, 0.5)
    w_right = np.where(upwind, 0.0, 0.5)
    d_over_h = m.D / h
    coef_left = (gf * w_left + d_over_h) / h    # u_i coefficient of face i+1/2
    coef_right = (gf * w_right - d_over_h) / h  # u_{i+1} coefficient

    # face i+1/2 enters row i with + and row i+1 with - (same numbers, so
    # column sums of the mu = 0 operator cancel exactly)
    diag[:-1] += coef_left
    upper[:-1] += coef_right
    lower[1:] -= coef_left
    diag[1:] -= coef_right

    outflow_right = (m.birth_sample_point is not None and not m.is_semi_infinite
                     and g.x_right >= m.x_max - 1e-12 * max(1.0, abs(m.x_max)))
    if outflow_right:
        gamma_end = float(m.gamma_at(g.x_right))
        diag[-1] += gamma_end / h  # upwind outflow flux gamma*u_{n-1}
        bc = BoundaryKind.OUTFLOW_RIGHT
    else:
        bc = BoundaryKind.NO_FLUX_BOTH

    diag += mu

    tol = 1e-12 * float(np.max(np.abs(diag)))
    if np.any(diag <= 0) or np.any(lower[1:] > tol) or np.any(upper[:-1] > tol):
        raise AssemblyError("discretization is not an M-matrix; "
                            "rates are too rough for this grid")
    return DiscreteOperator(lower=lower, diag=diag, upper=upper, grid=g,
                            bc_kind=bc, mu_values=mu)


def sample_weights(g: Grid, p: float) -> np.ndarray:
    """Quadratic-interpolation weights sampling u at p from the three nearest
    cell centers (u is smooth away from the birth point in-scope)."""
    xc = g.cell_centers
    order = np.argsort(np.abs(xc - p))[:3]
    idx = np.sort(order)
    w = np.zeros(g.n_cells)
    for a in idx:
        others = [b for b in idx if b != a]
        w[a] = math.prod((p - xc[b]) / (xc[a] - xc[b]) for b in others)
    return w


def assemble_interior_jump(m: ModelSpec, g: Grid, x_j: float) -> DiscreteOperator:
    """Transition operator with the interior flux-jump birth condition
    Phi(x_j+) - Phi(x_j-) = multiplicity * gamma(p) * u(p).

    x_j is snapped to the nearest interior face; the offspring are injected
    into the cell right of that face while the dividing mothers leave
    through a sink at the cell containing the sample point p, so setting the
    multiplicity scale to zero recovers assemble_operator exactly.
    """
    if m.birth_sample_point is None:
        raise UnsupportedModelError("interior-jump operator needs birth_sample_point")
    h = g.spacing
    faces = g.face_positions
    j = int(round((x_j - g.x_left) / h))
    if not 2 <= j <= g.n_cells - 2:
        raise ValueError("jump point must sit at least two cells inside the domain")
    if abs(faces[j] - x_j) > 0.5 * h + 1e-12 * h:
        raise ValueError("jump point does not line up with the grid")

    base = assemble_operator(m, g)
    p = m.birth_sample_point
    jump = JumpData(inject_row=j,
                    multiplicity=m.birth_multiplicity,
                    gamma_p=float(m.gamma_at(p)),
                    sample_weights=sample_weights(g, p))
    return DiscreteOperator(lower=base.lower, diag=base.diag, upper=base.upper,
                            grid=g, bc_kind=BoundaryKind.FLUX_JUMP_INTERIOR,
                            mu_values=base.mu_values, jump=jump)


def _as_values(rhs) -> np.ndarray:
    if isinstance(rhs, Field):
        return np.asarray(rhs.values, dtype=float)
    return np.asarray(rhs, dtype=float)


def solve_inverse(op: DiscreteOperator, rhs) -> Field:
    """Solve op * u = rhs by the Thomas algorithm; the interior-jump row is
    handled as a rank-one update (Sherman-Morrison with two band solves).

    The residual is verified against 1e-10 * ||rhs||_inf with one step of
    iterative refinement allowed before giving up; nonnegative inputs yield
    nonnegative solutions through the M-matrix structure.
    """
    b = _as_values(rhs)
    if len(b) != op.n:
        raise ValueError("rhs length does not match the operator")

    def band_solve(vec: np.ndarray) -> np.ndarray:
        try:
            return _kernels.thomas_solve(op.lower, op.diag, op.upper,
                                         np.ascontiguousarray(vec, dtype=float))
        except _kernels.SingularSolve as exc:
            raise SolverError(str(exc)) from exc

    if op.jump is None:
        def full_solve(vec):
            return band_solve(vec)
    else:
        col = op.jump.column_vector(op.n, op.grid.spacing)
        w = op.jump.sample_weights
        z = band_solve(col)
        denom = 1.0 + float(w @ z)
        if abs(denom) < 1e-14:
            raise SolverError("rank-one update is singular (critical fertility)")

        def full_solve(vec):
            y = band_solve(vec)
            return y - z * (float(w @ y) / denom)

    x = full_solve(b)
    scale = float(np.max(np.abs(b))) or 1.0
    residual = b - op.matvec(x)
    if float(np.max(np.abs(residual))) > SOLVE_RESIDUAL_TOL * scale:
        x = x + full_solve(residual)  # one step of iterative refinement
        residual = b - op.matvec(x)
        if float(np.max(np.abs(residual))) > SOLVE_RESIDUAL_TOL * scale:
            raise SolverError("solve residual exceeds 1e-10 * ||rhs||")
    return Field(values=x, grid=op.grid)


def transpose_apply_inverse(op: DiscreteOperator, w: np.ndarray) -> np.ndarray:
    """Solve op^T y = w (used to evaluate a functional on every Green's
    column with a single solve)."""
    if op.jump is not None:
        raise UnsupportedModelError("transpose solve not needed for jump operators")
    lower_t = np.concatenate(([0.0], op.upper[:-1]))
    upper_t = np.concatenate((op.lower[1:], [0.0]))
    try:
        return _kernels.thomas_solve(lower_t, op.diag, upper_t,
                                     np.ascontiguousarray(w, dtype=float))
    except _kernels.SingularSolve as exc:
        raise SolverError(str(exc)) from exc


def green_column(m: ModelSpec, g: Grid, s: float) -> Field:
    """Numerical Green's column: the solve against the narrowest
    grid-representable unit-mass indicator around s (one cell wide)."""
    op = assemble_operator(m, g)
    rhs = np.zeros(g.n_cells)
    rhs[g.cell_of(s)] = 1.0 / g.spacing
    return solve_inverse(op, rhs)


def leading_eigenvalue(op: DiscreteOperator, method: str = "auto",
                       tol: float = 1e-10, max_iter: int = 500) -> float:
    """Spectral bound of the evolution generator -A (the Malthus exponent of
    the stationary operator's dynamics).

    "inverse-power" iterates solves of A x = b, converging to the eigenvalue
    of A nearest zero (the growth mode near criticality); "dense" calls the
    QR eigensolver; "auto" tries inverse power and falls back to dense.
    """
    if method not in ("auto", "dense", "inverse-power"):
        raise ValueError(f"unknown method {method!r}")

    if method in ("auto", "inverse-power"):
        try:
            rng = np.random.default_rng(7)
            x = rng.random(op.n) + 0.5
            x /= np.linalg.norm(x)
            lam_prev = math.inf
            for _ in range(max_iter):
                y = solve_inverse(op, x).values
                ny = float(np.linalg.norm(y))
                if ny == 0.0 or not math.isfinite(ny):
                    raise SolverError("inverse iteration broke down")
                x_new = y / ny
                lam = float(x_new @ op.matvec(x_new))
                if abs(lam - lam_prev) < tol * max(1.0, abs(lam)):
                    resid = float(np.linalg.norm(op.matvec(x_new) - lam * x_new))
                    if resid < 1e-6 * max(1.0, abs(lam)):
                        return -lam
                    break
                lam_prev = lam
                x = x_new
            if method == "inverse-power":
                raise SolverError("inverse power iteration stalled")
        except SolverError:
            if method == "inverse-power":
                raise

    if op.n > 4096:
        raise UnsupportedModelError("dense eigensolve capped at n = 4096")
    eigs = np.linalg.eigvals(op.to_dense())
    return -float(np.min(eigs.real))
