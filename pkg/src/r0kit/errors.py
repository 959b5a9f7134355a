"""Exception types shared across the package."""


class R0KitError(Exception):
    """Base class for all r0kit errors."""


class RateDomainError(R0KitError):
    """Rate evaluated outside its tabulated range with extrapolation off."""


class UnsupportedModelError(R0KitError):
    """The requested closed-form route does not cover this model."""


class GridTooCoarseError(R0KitError):
    """Grid spacing cannot resolve the requested mollifier width."""


class AssemblyError(R0KitError):
    """Discretization lost the M-matrix structure (pathological rates)."""


class SolverError(R0KitError):
    """Linear solve failed (singular pivot or unmet residual bound)."""


class QuadratureError(R0KitError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ConvergenceError(R0KitError):
    """An iteration (power method, fit) stalled before its tolerance."""


class InstabilityError(R0KitError):
    """Time stepping tripped the runaway-growth diagnostic guard."""
