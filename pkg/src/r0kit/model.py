"""Model specification: rate functions, mollifier families, validation and
the plain-text model file format.

A model is a linear structured-population balance law on [x0, x_max):

    u_t = -(gamma(x) u - D u_x)_x - mu(x) u + births,

where births either enter through a fertility density beta (integral birth
functional) or through sampling the density at a division point.  All types
here are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import configparser
import csv
import enum
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import R0KitError, RateDomainError

#: sample count used by validate_model on top of family-specific exact checks
VALIDATION_SAMPLES = 1024

#: quadrature tolerance for mollifier normalization
MOLLIFIER_MASS_TOL = 1e-10


class RateFamily(enum.Enum):
    CONSTANT = "const"
    POWER_EXP = "powexp"
    STEP = "step"
    PROPORTIONAL_TO_MU = "prop_mu"
    TABULATED = "table"


@dataclass(frozen=True)
class RateFunction:
    """Nonnegative scalar function of the structuring variable.

    Families:
      CONSTANT(c)            f(x) = c
      POWER_EXP(c, n, r)     f(x) = c * x**n * exp(-r*x)
      STEP(threshold, level) f(x) = 0 below threshold, level at and above
      PROPORTIONAL_TO_MU(f)  f(x) = factor * mu(x), resolved by the model
      TABULATED(nodes)       linear interpolation, constant extrapolation
    """

    family: RateFamily
    params: tuple[float, ...] = ()
    nodes: Optional[tuple[tuple[float, float], ...]] = None
    extrapolate: bool = True

    def __post_init__(self):
        if self.family is RateFamily.TABULATED:
            if not self.nodes or len(self.nodes) < 2:
                raise ValueError("tabulated rate needs at least two nodes")
            xs = [x for x, _ in self.nodes]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError("tabulated nodes must be strictly increasing in x")

    # -- constructors ------------------------------------------------------
    @staticmethod
    def constant(c: float) -> "RateFunction":
        return RateFunction(RateFamily.CONSTANT, (float(c),))

    @staticmethod
    def power_exp(c: float, n: float, r: float) -> "RateFunction":
        return RateFunction(RateFamily.POWER_EXP, (float(c), float(n), float(r)))

    @staticmethod
    def step(threshold: float, level: float) -> "RateFunction":
        return RateFunction(RateFamily.STEP, (float(threshold), float(level)))

    @staticmethod
    def proportional_to_mu(factor: float) -> "RateFunction":
        return RateFunction(RateFamily.PROPORTIONAL_TO_MU, (float(factor),))

    @staticmethod
    def tabulated(nodes: Sequence[tuple[float, float]],
                  extrapolate: bool = True) -> "RateFunction":
        return RateFunction(RateFamily.TABULATED,
                            nodes=tuple((float(x), float(v)) for x, v in nodes),
                            extrapolate=extrapolate)

    def describe(self) -> str:
        if self.family is RateFamily.TABULATED:
            return f"table[{len(self.nodes)} nodes]"
        return f"{self.family.value}:{','.join(f'{p:g}' for p in self.params)}"


def evaluate_rate(f: RateFunction, x, mu: Optional[RateFunction] = None):
    """Evaluate a rate at x (scalar or array).

    PROPORTIONAL_TO_MU needs the model's mortality passed as ``mu``.
    Raises RateDomainError for tabulated rates queried outside their node
    range when extrapolation is disabled.
    """
    xa = np.asarray(x, dtype=float)
    fam = f.family
    if fam is RateFamily.CONSTANT:
        out = np.full_like(xa, f.params[0])
    elif fam is RateFamily.POWER_EXP:
        c, n, r = f.params
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(xa > 0, np.power(np.maximum(xa, 0.0), n), 1.0 if n == 0 else 0.0)
        out = c * p * np.exp(-r * xa)
    elif fam is RateFamily.STEP:
        threshold, level = f.params
        out = np.where(xa >= threshold, level, 0.0)
    elif fam is RateFamily.PROPORTIONAL_TO_MU:
        if mu is None:
            raise R0KitError("proportional-to-mortality rate needs the model's mu")
        out = f.params[0] * evaluate_rate(mu, xa)
    elif fam is RateFamily.TABULATED:
        xs = np.array([p[0] for p in f.nodes])
        vs = np.array([p[1] for p in f.nodes])
        if not f.extrapolate and (np.any(xa < xs[0]) or np.any(xa > xs[-1])):
            raise RateDomainError(
                f"x outside tabulated range [{xs[0]:g}, {xs[-1]:g}]")
        out = np.interp(xa, xs, vs)
    else:  # pragma: no cover
        raise R0KitError(f"unknown rate family {fam}")
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass(frozen=True)
class ModelSpec:
    """Complete linear model: domain, rates, diffusion and birth structure.

    ``birth_sample_point`` switches the birth functional from the integral
    form  L u = integral beta*u  to the sampled form
    L u = multiplicity * gamma(p) * u(p)  (cell-division models).
    ``x_left`` is the domain's left endpoint when the birth state x0 sits in
    the interior (e.g. symmetric division at half the mother size); it
    defaults to x0 itself.
    Construction only enforces structural sanity; the modelling assumptions
    (rates bounded below, fertility bounded) are checked by validate_model.
    """

    x0: float
    x_max: float  # math.inf for semi-infinite domains
    gamma: RateFunction
    mu: RateFunction
    beta: RateFunction
    D: float = 0.0
    birth_multiplicity: float = 1.0
    birth_sample_point: Optional[float] = None
    x_left: Optional[float] = None

    def __post_init__(self):
        if not self.x0 < self.x_max:
            raise ValueError(f"x0={self.x0} must be below x_max={self.x_max}")
        if self.D < 0:
            raise ValueError("diffusion coefficient must be nonnegative")
        if self.birth_multiplicity <= 0:
            raise ValueError("birth multiplicity must be positive")
        if self.birth_sample_point is not None and not (
                self.x0 < self.birth_sample_point <= self.x_max):
            raise ValueError("birth sample point must lie in (x0, x_max]")
        if self.x_left is not None and not self.x_left <= self.x0:
            raise ValueError("domain left endpoint must not exceed x0")

    @property
    def domain_left(self) -> float:
        return self.x0 if self.x_left is None else self.x_left

    # resolved evaluators ---------------------------------------------------
    def gamma_at(self, x):
        return evaluate_rate(self.gamma, x, self.mu)

    def mu_at(self, x):
        return evaluate_rate(self.mu, x)

    def beta_at(self, x):
        return evaluate_rate(self.beta, x, self.mu)

    @property
    def is_semi_infinite(self) -> bool:
        return math.isinf(self.x_max)


@dataclass(frozen=True)
class Violation:
    field_name: str
    message: str

    def __str__(self):
        return f"{self.field_name}: {self.message}"


def _probe_points(m: ModelSpec) -> np.ndarray:
    """Validation grid: 1024 equispaced points plus family breakpoints."""
    left = m.domain_left
    span = m.x_max - left
    if math.isinf(span):
        # probe over a few mortality decay lengths; refined by truncation later
        span = 60.0
        for f in (m.gamma, m.mu, m.beta):
            if f.family is RateFamily.TABULATED:
                span = max(span, f.nodes[-1][0] - left + 1.0)
            if f.family is RateFamily.STEP:
                span = max(span, 2.0 * (f.params[0] - left) + 1.0)
    pts = [np.linspace(left, left + span, VALIDATION_SAMPLES)]
    for f in (m.gamma, m.mu, m.beta):
        if f.family is RateFamily.TABULATED:
            pts.append(np.array([p[0] for p in f.nodes]))
        if f.family is RateFamily.STEP:
            pts.append(np.array([f.params[0], f.params[0] + 1e-9]))
    return np.unique(np.concatenate(pts))


def validate_model(m: ModelSpec) -> list[Violation]:
    """Check the standing assumptions; violations are data, not exceptions.

    Empty list iff gamma and mu are bounded below by a positive constant on
    the domain, beta is bounded and nonnegative, and x0 < x_max.
    """
    out: list[Violation] = []
    xs = _probe_points(m)

    if m.gamma.family is RateFamily.PROPORTIONAL_TO_MU:
        out.append(Violation("gamma", "growth rate may not be proportional-to-mu"))
    if m.mu.family is RateFamily.PROPORTIONAL_TO_MU:
        out.append(Violation("mu", "mortality may not be proportional-to-mu"))
    if out:
        return out

    gam = np.asarray(m.gamma_at(xs))
    mu = np.asarray(m.mu_at(xs))
    beta = np.asarray(m.beta_at(xs))

    def min_positive(f: RateFunction, sampled: np.ndarray, name: str, what: str):
        lo = float(sampled.min())
        # family-specific exact minima on top of sampling
        if f.family is RateFamily.POWER_EXP and f.params[1] > 0 and m.domain_left <= 0:
            lo = 0.0
        if f.family is RateFamily.POWER_EXP and f.params[2] > 0 and m.is_semi_infinite:
            lo = 0.0
        if f.family is RateFamily.STEP and f.params[0] > m.domain_left:
            lo = 0.0
        if lo <= 0:
            out.append(Violation(name, f"{what} not bounded below by a positive constant"))

    min_positive(m.gamma, gam, "gamma", "growth rate")
    min_positive(m.mu, mu, "mu", "mortality")

    if np.any(beta < 0):
        out.append(Violation("beta", "fertility negative"))
    if (m.beta.family is RateFamily.POWER_EXP and m.is_semi_infinite
            and m.beta.params[2] <= 0 and m.beta.params[1] > 0 and m.beta.params[0] > 0):
        out.append(Violation("beta", "fertility unbounded on the semi-infinite domain"))
    if m.beta.family is RateFamily.POWER_EXP and m.beta.params[1] < 0:
        out.append(Violation("beta", "fertility unbounded at the origin"))
    return out


# ---------------------------------------------------------------------------
# Mollifier families: unit-mass offspring densities concentrating at x0
# ---------------------------------------------------------------------------

class MollifierKind(enum.Enum):
    UNIFORM_INDICATOR = "uniform"
    SMOOTH_BUMP = "bump"
    TRIANGULAR = "triangular"


_BUMP_CACHE: dict[tuple, float] = {}
_BUMP_LOCK = threading.Lock()


@dataclass(frozen=True)
class MollifierFamily:
    """Family phi_k of probability densities concentrating at x0.

    UNIFORM_INDICATOR: k on [x0, x0 + 1/k].
    SMOOTH_BUMP:       a_k * x(1-x) * exp(-k|x - x0|) clipped to [0, 1],
                       a_k normalizing the mass to 1 (computed once per k).
    TRIANGULAR:        hat of half-width 1/k at x0, truncated to the domain
                       and renormalized so the mass is exactly 1.
    """

    kind: MollifierKind
    x0: float
    x_min: float
    x_max: float  # may be inf

    def __post_init__(self):
        if self.kind is MollifierKind.SMOOTH_BUMP and not 0.0 <= self.x0 < 1.0:
            raise ValueError("smooth bump requires x0 in [0, 1)")

    @staticmethod
    def for_model(kind: MollifierKind, m: ModelSpec) -> "MollifierFamily":
        return MollifierFamily(kind, m.x0, m.x0, m.x_max)


def _bump_norm(fam: MollifierFamily, k: int) -> float:
    key = (fam.x0, fam.x_min, fam.x_max, k)
    with _BUMP_LOCK:
        if key not in _BUMP_CACHE:
            from scipy.integrate import quad
            lo = max(fam.x_min, 0.0)
            hi = min(fam.x_max, 1.0)
            raw = lambda x: x * (1.0 - x) * math.exp(-k * abs(x - fam.x0))
            mass, _ = quad(raw, lo, hi, points=[fam.x0] if lo < fam.x0 < hi else None,
                           epsabs=1e-13, epsrel=1e-13, limit=200)
            _BUMP_CACHE[key] = 1.0 / mass
        return _BUMP_CACHE[key]


def mollifier_eval(fam: MollifierFamily, k: int, x):
    """Evaluate phi_k at x (scalar or array); nonnegative, unit mass."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    xa = np.asarray(x, dtype=float)
    if fam.kind is MollifierKind.UNIFORM_INDICATOR:
        out = np.where((xa >= fam.x0) & (xa <= fam.x0 + 1.0 / k), float(k), 0.0)
    elif fam.kind is MollifierKind.TRIANGULAR:
        lo = max(fam.x_min, fam.x0 - 1.0 / k)
        hi = min(fam.x_max, fam.x0 + 1.0 / k)
        # mass of the clipped unit hat, used to renormalize exactly
        mass = _hat_mass(fam.x0, k, lo, hi)
        out = np.clip(1.0 - k * np.abs(xa - fam.x0), 0.0, None) * (k / mass)
        out = np.where((xa < lo) | (xa > hi), 0.0, out)
    elif fam.kind is MollifierKind.SMOOTH_BUMP:
        a_k = _bump_norm(fam, k)
        core = xa * (1.0 - xa) * np.exp(-k * np.abs(xa - fam.x0))
        out = np.where((xa <= 0.0) | (xa >= 1.0), 0.0, a_k * np.maximum(core, 0.0))
        out = np.where((xa < fam.x_min) | (xa > fam.x_max), 0.0, out)
    else:  # pragma: no cover
        raise R0KitError(f"unknown mollifier kind {fam.kind}")
    return float(out) if np.ndim(x) == 0 else out


def _hat_mass(x0: float, k: int, lo: float, hi: float) -> float:
    """Mass of the unit hat k*(1 - k|x-x0|)_+ restricted to [lo, hi]."""

    def antider(x: float) -> float:
        z = min(max(k * (x - x0), -1.0), 1.0)
        if z <= 0.0:
            return 0.5 * (1.0 + z) ** 2
        return 1.0 - 0.5 * (1.0 - z) ** 2

    return antider(hi) - antider(lo)


def mollifier_cell_masses(fam: MollifierFamily, k: int,
                          edges: np.ndarray) -> np.ndarray:
    """Exact (to quadrature) mass of phi_k inside each cell [edges_i, edges_i+1].

    Returned masses are rescaled to sum to exactly 1 so the discrete birth
    distribution carries unit mass by construction.
    """
    if fam.kind is MollifierKind.UNIFORM_INDICATOR:
        ov = np.minimum(edges[1:], fam.x0 + 1.0 / k) - np.maximum(edges[:-1], fam.x0)
        m = float(k) * np.clip(ov, 0.0, None)
    elif fam.kind is MollifierKind.TRIANGULAR:
        lo = max(fam.x_min, fam.x0 - 1.0 / k)
        hi = min(fam.x_max, fam.x0 + 1.0 / k)
        total = _hat_mass(fam.x0, k, lo, hi)
        m = np.array([
            max(0.0, _hat_mass(fam.x0, k, max(a, lo), min(b, hi)))
            if b > lo and a < hi else 0.0
            for a, b in zip(edges[:-1], edges[1:])
        ]) / total
    elif fam.kind is MollifierKind.SMOOTH_BUMP:
        # per-cell Gauss-Legendre, splitting at the |x - x0| kink
        nodes, weights = np.polynomial.legendre.leggauss(7)
        supp_lo, supp_hi = max(fam.x_min, 0.0), min(fam.x_max, 1.0)

        def seg(a: float, b: float) -> float:
            if b <= a:
                return 0.0
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            xs = mid + half * nodes
            return half * float(np.sum(weights * mollifier_eval(fam, k, xs)))

        m = np.array([
            seg(max(a, supp_lo), min(fam.x0, b)) + seg(max(a, fam.x0), min(b, supp_hi))
            if b > supp_lo and a < supp_hi else 0.0
            for a, b in zip(edges[:-1], edges[1:])
        ])
    else:  # pragma: no cover
        raise R0KitError(f"unknown mollifier kind {fam.kind}")
    total = m.sum()
    if total <= 0:
        raise R0KitError("mollifier support does not meet the grid")
    return m / total


# ---------------------------------------------------------------------------
# Model file format (INI-style; see README for the grammar)
# ---------------------------------------------------------------------------

def parse_rate(text: str, base_dir: Optional[Path] = None) -> RateFunction:
    """Parse ``const:c | powexp:c,n,r | step:t,l | prop_mu:f | table:path``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "const":
            return RateFunction.constant(float(arg))
        if kind == "powexp":
            c, n, r = (float(v) for v in arg.split(","))
            return RateFunction.power_exp(c, n, r)
        if kind == "step":
            t, level = (float(v) for v in arg.split(","))
            return RateFunction.step(t, level)
        if kind == "prop_mu":
            return RateFunction.proportional_to_mu(float(arg))
        if kind == "table":
            path = Path(arg.strip())
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return RateFunction.tabulated(_read_rate_csv(path))
    except (ValueError, OSError) as exc:
        raise R0KitError(f"cannot parse rate {text!r}: {exc}") from exc
    raise R0KitError(f"unknown rate family {kind!r} in {text!r}")


def _read_rate_csv(path: Path) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise R0KitError(f"{path}: need a header row and at least two nodes")
    out = []
    for row in rows[1:]:  # header row skipped
        if not row:
            continue
        out.append((float(row[0]), float(row[1])))
    return out


def load_model(path) -> ModelSpec:
    """Load a model file (sections [domain], [rates], [diffusion], [birth])."""
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise R0KitError(f"cannot read model file {path}: {exc}") from exc
    try:
        dom = cp["domain"]
        rates = cp["rates"]
        x0 = float(dom["x0"])
        xmax_text = dom["x_max"].strip().lower()
        x_max = math.inf if xmax_text in ("inf", "+inf", "infinity") else float(xmax_text)
        x_left = float(dom["x_left"]) if "x_left" in dom else None
        gamma = parse_rate(rates["gamma"], path.parent)
        mu = parse_rate(rates["mu"], path.parent)
        beta = parse_rate(rates["beta"], path.parent)
        D = float(cp["diffusion"]["D"]) if cp.has_section("diffusion") else 0.0
        mult = 1.0
        sample_point = None
        if cp.has_section("birth"):
            birth = cp["birth"]
            mult = float(birth.get("multiplicity", "1"))
            if "sample_point" in birth:
                sample_point = float(birth["sample_point"])
        return ModelSpec(x0=x0, x_max=x_max, gamma=gamma, mu=mu, beta=beta, D=D,
                         birth_multiplicity=mult, birth_sample_point=sample_point,
                         x_left=x_left)
    except (KeyError, ValueError) as exc:
        raise R0KitError(f"model file {path} is incomplete or malformed: {exc}") from exc
