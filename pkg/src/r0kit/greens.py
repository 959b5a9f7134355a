"""Closed-form Green's functions of the transition operator
M u = (gamma u - D u')' + mu u  for the two analytically solvable cases:

* pure transport (D = 0) on [x0, inf):  G(x, s) = exp(-int_s^x mu/gamma) / gamma(x)
  for x >= s, zero below the source point;

* constant-coefficient transport-diffusion on [0, inf) with the zero-flux
  (Robin) condition u - D u' = 0 at the origin, whose kernel is built from
  the characteristic roots of  D z^2 - z - mu = 0.

Also provides the limit density G(., x0) that the mollified birth
distributions converge to, and the explicit image of the unit-mass
indicator k*1_[0,1/k] under M^{-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import QuadratureError, UnsupportedModelError
from .model import ModelSpec, RateFamily

#: absolute tolerance for the hazard integral int mu/gamma (it sits in an
#: exponent, so its error is amplified by the result)
HAZARD_QUAD_TOL = 1e-10

#: fault-injection hook for the CLI's --mutate dev flag; never set in
#: production code paths
_MUTATE_LAMBDA2_SIGN = False


@dataclass(frozen=True)
class LambdaPair:
    """Characteristic roots of D z^2 - z - mu = 0 for mu, D > 0.

    lambda1 > 0 carries the growing branch (discarded by integrability),
    lambda2 < 0 the decaying branch; sqrt_disc = sqrt(1 + 4*D*mu).
    """

    lambda1: float
    lambda2: float
    sqrt_disc: float


def lambda_pair(mu: float, Dd: float) -> LambdaPair:
    """Characteristic roots (1 +- sqrt(1+4*D*mu)) / (2D).

    The negative root is evaluated as -2*mu/(1 + sqrt_disc) (same number,
    no cancellation for small D, and the Vieta products hold to machine
    precision).  Raises UnsupportedModelError for D = 0: pure transport has
    no root pair and callers must branch to the transport formulas.
    """
    if Dd <= 0.0:
        raise UnsupportedModelError("characteristic root pair needs D > 0")
    if mu <= 0.0:
        raise ValueError("mortality must be positive")
    s = math.sqrt(1.0 + 4.0 * Dd * mu)
    lam2 = -2.0 * mu / (1.0 + s)
    if _MUTATE_LAMBDA2_SIGN:
        lam2 = -lam2
    return LambdaPair(lambda1=(1.0 + s) / (2.0 * Dd), lambda2=lam2, sqrt_disc=s)


def expm1_ratio(x):
    """(1 - exp(-x)) / x continued analytically through x = 0.

    Strictly decreasing and convex; evaluated through expm1 so the
    subtraction never cancels (the argument crosses zero inside the
    indicator-image formula).
    """
    xa = np.asarray(x, dtype=float)
    safe = np.where(xa == 0.0, 1.0, xa)
    out = np.where(xa == 0.0, 1.0, -np.expm1(-xa) / safe)
    return float(out) if np.ndim(x) == 0 else out


def hazard_integral(m: ModelSpec, s: float, x: float) -> float:
    """int_s^x mu/gamma, exact for constant rates, adaptive otherwise."""
    if m.mu.family is RateFamily.CONSTANT and m.gamma.family is RateFamily.CONSTANT:
        return m.mu.params[0] / m.gamma.params[0] * (x - s)
    lo, hi = min(s, x), max(s, x)
    kinks = []  # integrand kinks (tabulated nodes, step thresholds)
    for f in (m.mu, m.gamma):
        if f.family is RateFamily.TABULATED:
            kinks.extend(p for p, _ in f.nodes if lo < p < hi)
        if f.family is RateFamily.STEP and lo < f.params[0] < hi:
            kinks.append(f.params[0])
    val, err = quad(lambda t: m.mu_at(t) / m.gamma_at(t), s, x,
                    points=sorted(kinks) or None,
                    epsabs=HAZARD_QUAD_TOL, epsrel=1e-12, limit=200)
    if err > 100 * max(HAZARD_QUAD_TOL, 1e-12 * abs(val)):
        raise QuadratureError(f"hazard integral on [{s:g}, {x:g}] did not converge")
    return val


def greens_size(x: float, s: float, m: ModelSpec) -> float:
    """Transport Green's function exp(-int_s^x mu/gamma)/gamma(x) * [x >= s].

    Requires D = 0.  Individuals born at s survive to x with probability
    exp(-hazard); the 1/gamma converts survival to residence density.
    """
    if m.D != 0.0:
        raise UnsupportedModelError("greens_size applies to D = 0 models")
    if x < s:
        return 0.0
    return math.exp(-hazard_integral(m, s, x)) / m.gamma_at(x)


def greens_age_diffusion(a, s, mu: float, Dd: float):
    """Green's function of  v' + mu v - D v''  with  v(0) = D v'(0).

    G(a, s) = (exp(lam1 (a-s)) H(s-a) + exp(lam2 (a-s)) H(a-s)
               - (lam2/lam1) exp(lam2 a - lam1 s)) / sqrt(1+4*D*mu)

    The diagonal uses H(0) = 1 on the (a-s) factor and H(0) = 0 on the
    (s-a) factor so the a = s value is counted exactly once (any
    single-count convention yields the same integrals).
    """
    lp = lambda_pair(mu, Dd)
    aa = np.asarray(a, dtype=float)
    ss = np.asarray(s, dtype=float)
    above = aa >= ss  # H(a-s) branch, diagonal included here
    out = (np.where(above, np.exp(lp.lambda2 * (aa - ss)), np.exp(lp.lambda1 * (aa - ss)))
           - (lp.lambda2 / lp.lambda1) * np.exp(lp.lambda2 * aa - lp.lambda1 * ss)
           ) / lp.sqrt_disc
    return float(out) if np.ndim(a) == 0 and np.ndim(s) == 0 else out


def limit_density_age(a, mu: float, Dd: float):
    """Limit of the mollifier images M^{-1} phi_k: the Green's column at the
    birth point,  2 exp(lambda2 a) / (1 + sqrt(1+4*D*mu)).

    Strictly decreasing in a; equals greens_age_diffusion(a, 0).
    """
    lp = lambda_pair(mu, Dd)
    out = (1.0 - lp.lambda2 / lp.lambda1) * np.exp(lp.lambda2 * np.asarray(a, dtype=float)) / lp.sqrt_disc
    return float(out) if np.ndim(a) == 0 else out


def indicator_image_age(a, k: int, mu: float, Dd: float):
    """M^{-1} applied to the unit-mass indicator k*1_[0,1/k], in closed form.

    With F = expm1_ratio and (lam1, lam2) the characteristic roots:

        (1/sqrt(1+4*mu*D)) * [ (1 - a k) (F(lam1 (1/k - a)) - F(lam2 (1/k - a)))
                               * 1_[0,1/k](a)
                             + (F(lam2/k) - (lam2/lam1) F(lam1/k)) exp(lam2 a) ]

    Nonnegative for every a >= 0; converges pointwise (and in L1) to
    limit_density_age as k grows.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    lp = lambda_pair(mu, Dd)
    aa = np.asarray(a, dtype=float)
    w = 1.0 / k - aa
    inside = (aa >= 0.0) & (aa <= 1.0 / k)
    hump = np.where(inside,
                    (1.0 - aa * k) * (expm1_ratio(lp.lambda1 * w) - expm1_ratio(lp.lambda2 * w)),
                    0.0)
    tail_coef = expm1_ratio(lp.lambda2 / k) - (lp.lambda2 / lp.lambda1) * expm1_ratio(lp.lambda1 / k)
    out = (hump + tail_coef * np.exp(lp.lambda2 * aa)) / lp.sqrt_disc
    return float(out) if np.ndim(a) == 0 else out


def greens_limit_density(m: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    """The limit density a -> G(a, x0) for the analytically solvable cases.

    Supported: D = 0 (any valid rates) and D > 0 with constant mu and
    constant gamma (reduced to the unit-transport kernel by rescaling the
    structuring variable).  Anything else raises UnsupportedModelError and
    should go through the numerical route in r0kit.discrete.
    """
    if m.D == 0.0:
        def psi_transport(x):
            xa = np.asarray(x, dtype=float)
            out = np.array([greens_size(float(v), m.x0, m) for v in np.atleast_1d(xa)])
            return float(out[0]) if np.ndim(x) == 0 else out.reshape(xa.shape)
        return psi_transport

    if (m.mu.family is RateFamily.CONSTANT and m.gamma.family is RateFamily.CONSTANT
            and m.is_semi_infinite):
        mu0 = m.mu.params[0]
        gamma0 = m.gamma.params[0]
        d_scaled = m.D / gamma0 ** 2

        def psi_diffusive(x):
            y = (np.asarray(x, dtype=float) - m.x0) / gamma0
            out = limit_density_age(y, mu0, d_scaled) / gamma0
            return float(out) if np.ndim(x) == 0 else out
        return psi_diffusive

    raise UnsupportedModelError(
        "no closed-form limit density for D > 0 with non-constant rates; "
        "use the numerical Green's column in r0kit.discrete")
