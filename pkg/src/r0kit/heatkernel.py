"""Time-domain route to the reproduction number for the constant-coefficient
transport-diffusion model.

The zero-fertility propagator is built from the half-line heat kernel with a
Robin reflection (handbook entry X30), transplanted by the substitution
v(a,t) = exp(a/2D - (mu + 1/4D) t) u(a,t).  Its time integral recovers the
Green's function of the stationary operator, so

    R0 = int beta(a) int_0^inf K(a, 0, t) dt da

must agree with the stationary (spectral) route; the module exposes the
pieces of that identity so each can be checked independently.

All kernels are evaluated in merged-exponent form: every exponential
argument is algebraically nonpositive and the complementary error function
enters only through erfcx, so the formulas stay finite for t up to 1e4 and
ages up to 1e3 across D in [1e-2, 1e2].
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx

from .errors import QuadratureError, UnsupportedModelError
from .greens import lambda_pair
from .model import ModelSpec, RateFamily

#: relative point beyond which the time integrand is treated as zero:
#: T* = max(10 a, 50/mu) puts the tail below exp(-50) of its peak
TIME_TRUNCATION = (10.0, 50.0)


def reflected_heat_kernel(a: float, s: float, t: float, Dd: float) -> float:
    """Heat kernel on [0, inf) with the reflection u(0) - 2D u'(0) = 0.

    Literal form (symmetric in a and s):

        (exp(-(a-s)^2/4Dt) + exp(-(a+s)^2/4Dt)) / (2 sqrt(pi D t))
        - exp(t/4D + (a+s)/2D) (1 - erf((a+s+t)/(2 sqrt(D t)))) / (2D)

    The last term is computed as exp(-(a+s)^2/4Dt) * erfcx(z) / 2D with
    z = (a+s+t)/(2 sqrt(Dt)), which is the same number without forming the
    overflowing exponential against the vanishing erfc factor.
    """
    if t <= 0.0:
        raise ValueError("time must be positive")
    q = 4.0 * Dd * t
    z = (a + s + t) / (2.0 * math.sqrt(Dd * t))
    gauss = (math.exp(-((a - s) ** 2) / q) + math.exp(-((a + s) ** 2) / q)) \
        / (2.0 * math.sqrt(math.pi * Dd * t))
    return gauss - math.exp(-((a + s) ** 2) / q) * erfcx(z) / (2.0 * Dd)


def survival_kernel(a: float, s: float, t: float, mu: float, Dd: float) -> float:
    """Propagator of  u_t = -u_a - mu u + D u_aa,  u(0) - D u_a(0) = 0.

    Equals exp(a/2D - (mu + 1/4D) t - s/2D) * reflected_heat_kernel(a, s, t)
    with the exponents merged before evaluation:

        exp(-mu t) [ exp(-(a-s-t)^2/4Dt) / (2 sqrt(pi D t))
                   + exp(-(a+s-t)^2/4Dt - s/D) / (2 sqrt(pi D t))
                   - exp(-(a+s-t)^2/4Dt - s/D) erfcx((a+s+t)/(2 sqrt(Dt))) / 2D ]
    """
    if t <= 0.0:
        raise ValueError("time must be positive")
    q = 4.0 * Dd * t
    z = (a + s + t) / (2.0 * math.sqrt(Dd * t))
    direct = math.exp(-((a - s - t) ** 2) / q) / (2.0 * math.sqrt(math.pi * Dd * t))
    mirrored = math.exp(-((a + s - t) ** 2) / q - s / Dd)
    return math.exp(-mu * t) * (direct
                                + mirrored / (2.0 * math.sqrt(math.pi * Dd * t))
                                - mirrored * erfcx(z) / (2.0 * Dd))


def _time_horizon(a: float, mu: float) -> float:
    c1, c2 = TIME_TRUNCATION
    return max(c1 * a, c2 / mu)


def heat_integral_identity(a: float, mu: float, Dd: float) -> tuple[float, float]:
    """Both sides of the completing-the-squares identity

        int_0^inf exp(-mu t) exp(-(a-t)^2/4Dt) / sqrt(pi D t) dt
            = 2 exp((a/2D)(1 - sqrt(1+4D mu))) / sqrt(1+4D mu).

    The left side is integrated adaptively after the substitution t = q^2
    (which removes the 1/sqrt(t) endpoint singularity); the right side is
    the closed form.  Callers assert |lhs - rhs| within their tolerance.
    """
    horizon = _time_horizon(a, mu)

    def integrand(qv: float) -> float:
        t = qv * qv
        if t == 0.0:
            return 0.0
        return 2.0 * math.exp(-mu * t - (a - t) ** 2 / (4.0 * Dd * t)) / math.sqrt(math.pi * Dd)

    lhs, err, info = quad(integrand, 0.0, math.sqrt(horizon),
                          epsabs=1e-12, epsrel=1e-12, limit=400, full_output=True)[:3]
    if err > 1e-8 * max(1.0, abs(lhs)):
        raise QuadratureError("time integral did not reach tolerance")
    lp = lambda_pair(mu, Dd)
    rhs = 2.0 * math.exp(lp.lambda2 * a) / lp.sqrt_disc
    return lhs, rhs


def lifetime_density(a, mu: float, Dd: float):
    """Expected residence density int_0^inf K(a, 0, t) dt of a newborn:

        2 exp(lam2 a)/sqrt(1+4 D mu)
            - exp(lam2 a)/(2 mu D) * (1 - 1/sqrt(1+4 mu D)).

    Algebraically identical to the stationary limit density
    (both reduce to 2 exp(lam2 a)/(1 + sqrt(1+4D mu))); kept in this
    two-term form because it is what the time integration produces.
    """
    lp = lambda_pair(mu, Dd)
    decay = np.exp(lp.lambda2 * np.asarray(a, dtype=float))
    out = decay * (2.0 / lp.sqrt_disc
                   - (1.0 - 1.0 / lp.sqrt_disc) / (2.0 * mu * Dd))
    return float(out) if np.ndim(a) == 0 else out


def time_integrated_kernel(a: float, s: float, mu: float, Dd: float) -> float:
    """int_0^inf K(a, s, t) dt by adaptive quadrature (t = q^2 substitution).

    This is the fully numerical counterpart of the stationary Green's
    function; the finite-k time-domain route averages it over the offspring
    interval.
    """
    horizon = _time_horizon(a + s + 1.0, mu)
    val, err = quad(lambda qv: 2.0 * qv * survival_kernel(a, s, qv * qv, mu, Dd)
                    if qv > 0.0 else 0.0,
                    0.0, math.sqrt(horizon), epsabs=1e-11, epsrel=1e-11, limit=400)
    if err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureError("kernel time integral did not reach tolerance")
    return val


def _age_coordinates(m: ModelSpec) -> tuple[float, float, float]:
    """Reduce a constant-coefficient model to unit transport speed.

    Returns (mu0, D_scaled, gamma0); the reduced age is a = (x - x0)/gamma0
    and fertility is sampled at x0 + gamma0 * a.
    """
    if m.D <= 0.0:
        raise UnsupportedModelError("time-domain route needs D > 0")
    if m.mu.family is not RateFamily.CONSTANT:
        raise UnsupportedModelError("time-domain route needs constant mortality")
    if m.gamma.family is not RateFamily.CONSTANT:
        raise UnsupportedModelError("time-domain route needs constant growth rate")
    if not m.is_semi_infinite:
        raise UnsupportedModelError("time-domain route needs an unbounded domain")
    gamma0 = m.gamma.params[0]
    return m.mu.params[0], m.D / gamma0 ** 2, gamma0


def _fertility_breakpoints(m: ModelSpec, gamma0: float) -> list[float]:
    pts = []
    if m.beta.family is RateFamily.STEP:
        pts.append((m.beta.params[0] - m.x0) / gamma0)
    if m.beta.family is RateFamily.TABULATED:
        pts.extend((x - m.x0) / gamma0 for x, _ in m.beta.nodes)
    return [p for p in pts if p > 0.0]


def r0_time_domain(m: ModelSpec, k="limit") -> float:
    """Reproduction number through the time-domain (semigroup) route.

    For k = "limit":   int beta(a) * lifetime_density(a) da.
    For finite k:      the kernel is the average over offspring states
    s in [0, 1/k] of the numerically time-integrated propagator, i.e. the
    reproduction number of the model whose newborns are uniform on that
    interval.

    Constant mortality and growth rate with D > 0 are required; the domain
    is truncated where beta(a) exp(lam2 a) drops below 1e-14 of its scale.
    """
    mu0, d_scaled, gamma0 = _age_coordinates(m)
    lp = lambda_pair(mu0, d_scaled)
    if m.beta.family is RateFamily.CONSTANT and m.beta.params[0] == 0.0:
        return 0.0

    a_max = math.log(1e14) / abs(lp.lambda2)
    for p in _fertility_breakpoints(m, gamma0):
        a_max = max(a_max, p + math.log(1e14) / abs(lp.lambda2))

    def beta_of_age(a: float) -> float:
        return m.beta_at(m.x0 + gamma0 * a)

    if k == "limit":
        kernel = lambda a: lifetime_density(a, mu0, d_scaled)
    else:
        kk = int(k)
        if kk < 1:
            raise ValueError("k must be a positive integer or 'limit'")
        nodes, weights = np.polynomial.legendre.leggauss(8)
        s_nodes = (nodes + 1.0) * 0.5 / kk
        s_weights = weights * 0.5  # mean over [0, 1/k]

        def kernel(a: float) -> float:
            return float(sum(w * time_integrated_kernel(a, s, mu0, d_scaled)
                             for w, s in zip(s_weights, s_nodes)))

    breaks = sorted(set(p for p in _fertility_breakpoints(m, gamma0) if p < a_max))
    val, err = quad(lambda a: beta_of_age(a) * kernel(a), 0.0, a_max,
                    points=breaks or None, epsabs=1e-10, epsrel=1e-10, limit=400)
    if err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureError("fertility integral did not reach tolerance")
    return val
