"""Closed-form reproduction numbers for the analytically solvable model
families; these are the oracles the numerical routes are tested against.

All diffusive formulas are written through the identity
lambda2 = -2 mu / (1 + sqrt(1 + 4 D mu)), which removes the small-D
cancellation, so every branch is stable from D = 0 through D = 1e8.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import QuadratureError, UnsupportedModelError
from .greens import hazard_integral, lambda_pair
from .model import ModelSpec, RateFamily, RateFunction

#: D below this uses the transport (D = 0) formulas; the diffusive ones are
#: already stable there, this only skips needless root-pair work
D_ZERO_CROSSOVER = 1e-8

#: survival exponent at which the fertility integral is truncated
TAIL_EXPONENT = 40.0


def _beta_breakpoints(m: ModelSpec) -> list[float]:
    pts = []
    if m.beta.family is RateFamily.STEP:
        pts.append(m.beta.params[0])
    if m.beta.family is RateFamily.TABULATED:
        pts.extend(x for x, _ in m.beta.nodes)
    return pts


def r0_size_closed(m: ModelSpec) -> float:
    """Transport-model reproduction number
    int_{x0}^{x_max} beta(x)/gamma(x) * exp(-int_{x0}^x mu/gamma) dx.

    Exact branches: all-constant rates give beta/mu (times the survival
    deficit on finite domains) and proportional fertility beta = c*mu gives
    c exactly.  Everything else runs nested adaptive quadrature with the
    domain truncated where the survival factor drops below exp(-40).
    """
    if m.D != 0.0:
        raise UnsupportedModelError("transport formula needs D = 0")

    if m.beta.family is RateFamily.PROPORTIONAL_TO_MU:
        c = m.beta.params[0]
        if m.is_semi_infinite:
            return c
        return c * -math.expm1(-hazard_integral(m, m.x0, m.x_max))

    constant = all(f.family is RateFamily.CONSTANT for f in (m.gamma, m.mu, m.beta))
    if constant:
        beta0, mu0, gamma0 = m.beta.params[0], m.mu.params[0], m.gamma.params[0]
        if m.is_semi_infinite:
            return beta0 / mu0
        return beta0 / mu0 * -math.expm1(-mu0 * (m.x_max - m.x0) / gamma0)

    xs = np.linspace(m.x0, min(m.x_max, m.x0 + 240.0), 257)
    mu_min = float(np.min(m.mu_at(xs)))
    gamma_max = float(np.max(m.gamma_at(xs)))
    if mu_min <= 0:
        raise UnsupportedModelError("fertility integral needs mortality bounded below")
    x_end = min(m.x_max, m.x0 + TAIL_EXPONENT * gamma_max / mu_min)
    breaks = sorted(p for p in _beta_breakpoints(m) if m.x0 < p < x_end)
    val, err = quad(lambda x: m.beta_at(x) / m.gamma_at(x)
                    * math.exp(-hazard_integral(m, m.x0, x)),
                    m.x0, x_end, points=breaks or None,
                    epsabs=1e-10, epsrel=1e-10, limit=300)
    if err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureError("fertility integral did not converge")
    return val


def r0_cell_distributed(m: ModelSpec,
                        phi: Optional[Callable[[float], float]] = None) -> float:
    """Division-at-size-one model: offspring drawn from a density phi on
    (0, 1), each division yielding ``birth_multiplicity`` daughters:

        R0 = multiplicity * int_0^1 exp(-int_s^1 mu/gamma) phi(s) ds.

    phi = None takes the perfectly symmetric limit (point mass at 1/2).
    Mass conservation during division requires phi(s) = phi(1-s); an
    asymmetric phi triggers a warning, not an error.
    """
    if m.D != 0.0:
        raise UnsupportedModelError("cell formula needs D = 0")
    mult = m.birth_multiplicity
    p = m.birth_sample_point if m.birth_sample_point is not None else m.x_max
    lo = m.domain_left
    if phi is None:
        return mult * math.exp(-hazard_integral(m, m.x0, p))

    asym, _ = quad(lambda s: abs(phi(s) - phi(2.0 * m.x0 - s)), lo, p,
                   epsabs=1e-10, limit=200)
    if asym > 1e-8:
        _warnings.warn("offspring density is not symmetric about the birth "
                       "point; mass is not conserved at division", stacklevel=2)
    val, err = quad(lambda s: math.exp(-hazard_integral(m, s, p)) * phi(s),
                    lo, p, epsabs=1e-11, epsrel=1e-11, limit=200)
    if err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError("offspring integral did not converge")
    return mult * val


def _age_reduction(m: ModelSpec) -> tuple[float, float, float]:
    """(mu0, D/gamma0^2, gamma0) for constant-coefficient models; the change
    of variable a = (x - x0)/gamma0 reduces them to unit transport speed."""
    if m.mu.family is not RateFamily.CONSTANT:
        raise UnsupportedModelError("diffusive formula needs constant mortality")
    if m.gamma.family is not RateFamily.CONSTANT:
        raise UnsupportedModelError("diffusive formula needs constant growth rate")
    if not m.is_semi_infinite:
        raise UnsupportedModelError("diffusive formula needs an unbounded domain")
    gamma0 = m.gamma.params[0]
    return m.mu.params[0], m.D / gamma0 ** 2, gamma0


def r0_age_diffusion(m: ModelSpec) -> float:
    """Reproduction number of the constant-coefficient diffusive model:

        R0 = (2 / (1 + sqrt(1+4*D*mu))) * int_0^inf beta(a) exp(lambda2 a) da

    in the rescaled age a = (x - x0)/gamma.  D below 1e-8 falls back to the
    transport expression int beta e^{-mu a} da.  Constant, power-exponential
    (x0 = 0), step and proportional fertilities use exact closed forms;
    anything else is integrated adaptively.

    The same expression arises from the characteristic equation of the
    exponential solutions; in general only the sign of that threshold minus
    one is guaranteed to match the reproduction number's, but for this model
    the two quantities coincide (the limit construction reproduces it), so
    they are treated as equal here.
    """
    if m.D < D_ZERO_CROSSOVER:
        m0 = ModelSpec(x0=m.x0, x_max=m.x_max, gamma=m.gamma, mu=m.mu,
                       beta=m.beta, D=0.0)
        return r0_size_closed(m0)
    mu0, d_scaled, gamma0 = _age_reduction(m)
    lp = lambda_pair(mu0, d_scaled)
    front = 2.0 / (1.0 + lp.sqrt_disc)
    beta = m.beta

    if beta.family is RateFamily.CONSTANT:
        return beta.params[0] / mu0
    if beta.family is RateFamily.PROPORTIONAL_TO_MU:
        return beta.params[0]
    if beta.family is RateFamily.STEP:
        threshold, level = beta.params
        a_thr = max(0.0, (threshold - m.x0) / gamma0)
        return level / mu0 * math.exp(lp.lambda2 * a_thr)
    if beta.family is RateFamily.POWER_EXP and m.x0 == 0.0:
        c, n, r = beta.params
        # int a^n exp(-(r*gamma0 - lambda2) a) da = Gamma(n+1)/rate^(n+1)
        rate = r * gamma0 - lp.lambda2
        log_int = gammaln(n + 1.0) - (n + 1.0) * math.log(rate)
        return front * c * gamma0 ** n * math.exp(log_int)

    a_max = TAIL_EXPONENT / abs(lp.lambda2)
    breaks = sorted((p - m.x0) / gamma0 for p in _beta_breakpoints(m)
                    if m.x0 < p < m.x0 + gamma0 * a_max)
    val, err = quad(lambda a: m.beta_at(m.x0 + gamma0 * a) * math.exp(lp.lambda2 * a),
                    0.0, a_max, points=breaks or None,
                    epsabs=1e-11, epsrel=1e-11, limit=300)
    if err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureError("fertility integral did not converge")
    return front * val


def r0_quadratic_beta(beta0: float, mu: float, Dd: float) -> float:
    """Closed form for the fertility beta0 * a^2 * exp(-a):

        R0 = 32 beta0 D^3 / ((2D + sqrt(1+4 mu D) - 1)^3 (1 + sqrt(1+4 mu D)))

    evaluated in the equivalent cancellation-free form
    4 beta0 / ((1 + 2 mu/(1+S))^3 (1+S)), S = sqrt(1+4 mu D), which tends to
    2 beta0/(mu+1)^3 as D -> 0.  For mu > 1/2 the maximum over D is
    8 beta0/(27 mu), attained at D = 4 mu - 2.
    """
    if mu <= 0:
        raise ValueError("mortality must be positive")
    if Dd < 0:
        raise ValueError("diffusion must be nonnegative")
    s = math.sqrt(1.0 + 4.0 * mu * Dd)
    return 4.0 * beta0 / ((1.0 + 2.0 * mu / (1.0 + s)) ** 3 * (1.0 + s))


def r0_step_beta(beta0: float, mu: float, Dd: float) -> float:
    """Closed form for fertility vanishing below age 1 and beta0 above:

        R0 = (beta0/mu) * exp((1 - sqrt(1+4 mu D))/(2D))
           = (beta0/mu) * exp(-2 mu / (1 + sqrt(1+4 mu D)))

    Strictly increasing in D, from (beta0/mu) e^{-mu} at D = 0 towards
    beta0/mu (no maturation delay) as D -> infinity.
    """
    if mu <= 0:
        raise ValueError("mortality must be positive")
    if Dd < 0:
        raise ValueError("diffusion must be nonnegative")
    s = math.sqrt(1.0 + 4.0 * mu * Dd)
    return beta0 / mu * math.exp(-2.0 * mu / (1.0 + s))


@dataclass(frozen=True)
class OptimalDiffusion:
    d_star: Optional[float]  # None when flat or on a boundary
    r0_star: float
    boundary: Optional[str] = None  # "lower" | "upper"
    flat: bool = False


#: search window for the diffusion maximizer (log-spaced)
D_SEARCH_RANGE = (1e-6, 1e6)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_diffusion(beta_family: RateFunction, mu: float,
                      tol: float = 1e-8) -> OptimalDiffusion:
    """Maximize the diffusive reproduction number over D in [1e-6, 1e6].

    A coarse log-spaced scan brackets the maximizer (R0 varies over decades
    in D, so the search runs in log D); golden-section refinement then
    shrinks the bracket below ``tol`` in D.  Flat objectives (constant
    fertility) and monotone ones (step fertility) are reported as such
    instead of pretending an interior optimum exists.
    """
    def objective(d: float) -> float:
        mspec = ModelSpec(x0=0.0, x_max=math.inf, gamma=RateFunction.constant(1.0),
                          mu=RateFunction.constant(mu), beta=beta_family, D=d)
        return r0_age_diffusion(mspec)

    lo, hi = D_SEARCH_RANGE
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), 61))
    vals = np.array([objective(d) for d in grid])
    spread = float(vals.max() - vals.min())
    if spread <= 1e-12 * max(1.0, float(np.abs(vals).max())):
        return OptimalDiffusion(d_star=None, r0_star=float(vals[0]), flat=True)
    i = int(np.argmax(vals))
    if i == 0:
        return OptimalDiffusion(d_star=None, r0_star=float(vals[0]), boundary="lower")
    if i == len(grid) - 1:
        return OptimalDiffusion(d_star=None, r0_star=float(vals[-1]), boundary="upper")

    a, b = math.log(grid[i - 1]), math.log(grid[i + 1])
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = objective(math.exp(c)), objective(math.exp(d))
    while (math.exp(b) - math.exp(a)) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = objective(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = objective(math.exp(d))
    d_star = math.exp(0.5 * (a + b))
    return OptimalDiffusion(d_star=d_star, r0_star=objective(d_star))


def analytic_r0(m: ModelSpec) -> float:
    """Dispatch to the closed form matching the model structure."""
    if m.birth_sample_point is not None:
        if m.D != 0.0:
            raise UnsupportedModelError("no closed form for diffusive division models")
        return m.birth_multiplicity * math.exp(
            -hazard_integral(m, m.x0, m.birth_sample_point))
    if m.D == 0.0:
        return r0_size_closed(m)
    return r0_age_diffusion(m)
