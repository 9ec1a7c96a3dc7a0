"""Numerical laboratory for cooperative KPP reaction-diffusion systems with Lotka-Volterra competition."""

from .discretization import (BlockOperator, assemble_linearized, assemble_neumann_laplacian,
                             laplacian_eigenvalues, residual)
from .errors import (ComplexLeadingPairError, ConfigError, ConvergenceError, DivergenceError,
                     KppLabError, NotBistableError, NotSteadyError, PositivityError,
                     ShapeMismatchError, SingularJacobianError)
from .model import (DomainGrid, OrderRelation, StateField, SystemSpec, Violation, compare_states,
                    validate_spec)
from .nonlinearity import (LotkaVolterra, b_eval, b_jacobian, check_hypotheses, cooperativity_box,
                           falsify_uniform_monotonicity)
from .parabolic import Outcome, basin_scan, imex_step, integrate, integrate_many, stability_probe
from .scenarios import BUILTIN, Scenario, counterexample_spec, load_scenario
from .spectral import (Stability, principal_eigenpair, stability_of_constant_state,
                       stability_of_state)
from .steady import (comparability_matrix, find_constant_states, multistart_search,
                     mutation_continuation, newton_steady, verify_counterexample)

__version__ = "0.1.0"
