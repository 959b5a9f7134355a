"""r0kit: reproduction numbers of structured population models whose
newborns concentrate at a single state.

The stationary route discretizes the transition operator, computes rank-one
next-generation spectral radii along a sequence of concentrating offspring
densities, and extrapolates the limit; closed forms and a time-domain
(propagator) route cross-check it.
"""

from .analytic import (OptimalDiffusion, analytic_r0, optimal_diffusion,
                       r0_age_diffusion, r0_cell_distributed,
                       r0_quadratic_beta, r0_size_closed, r0_step_beta)
from .discrete import (BoundaryKind, DiscreteOperator, Field, Grid,
                       assemble_interior_jump, assemble_operator, green_column,
                       grid_for_model, leading_eigenvalue, solve_inverse,
                       truncation_right)
from .errors import (AssemblyError, ConvergenceError, GridTooCoarseError,
                     InstabilityError, QuadratureError, R0KitError,
                     RateDomainError, SolverError, UnsupportedModelError)
from .greens import (LambdaPair, expm1_ratio, greens_age_diffusion,
                     greens_limit_density, greens_size, indicator_image_age,
                     lambda_pair, limit_density_age)
from .heatkernel import (heat_integral_identity, lifetime_density,
                         r0_time_domain, reflected_heat_kernel, survival_kernel,
                         time_integrated_kernel)
from .model import (ModelSpec, MollifierFamily, MollifierKind, RateFamily,
                    RateFunction, Violation, evaluate_rate, load_model,
                    mollifier_eval, validate_model)
from .nextgen import (BirthFunctional, BirthKind, R0Report, birth_functional,
                      r0_finite_rank, r0_limit, r0_rank_one, r0_upper_bound,
                      spectral_radius)
from .semigroup import (EvolutionState, SignConsistency, evolve,
                        initial_state, malthus_estimate, sign_consistency,
                        step)

__version__ = "0.1.0"
