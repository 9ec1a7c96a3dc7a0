"""Exception hierarchy for kpp_lab."""


class KppLabError(Exception):
    """Base class for all errors raised by kpp_lab."""


class ShapeMismatchError(KppLabError, ValueError):
    """Two fields or operators do not share a grid / species count."""


class ConfigError(KppLabError, ValueError):
    """Invalid scenario, grid or command-line configuration."""


class ConvergenceError(KppLabError):
    """An iterative method did not converge.

    Attributes
    ----------
    residual : float
        Last residual reached before giving up.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DivergenceError(ConvergenceError):
    """Newton line search could not reduce the residual."""


class SingularJacobianError(KppLabError):
    """The linear solver broke down on the Newton / propagator system."""


class ComplexLeadingPairError(ConvergenceError):
    """Propagator power iteration oscillates: the rightmost eigenvalues are complex."""


class NotSteadyError(KppLabError):
    """A state passed as steady has a residual above the admissible level."""


class NotBistableError(KppLabError):
    """The base system of a mutation continuation is not bistable competitive."""


class PositivityError(KppLabError):
    """A time integration produced a negative iterate."""
