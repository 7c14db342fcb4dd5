"""Error taxonomy shared across the package.

The CLI maps these to exit codes: ConfigurationError -> 2,
SolverError -> 3, InternalError -> 4.
"""


class EquistressError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EquistressError):
    """Invalid user input: config files, law parameters, geometry requests."""


class SolverError(EquistressError):
    """Nonlinear solver failed to converge.

    Carries the residual history for diagnostics.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ReconstructionError(EquistressError):
    """Stress reconstruction input failed its compatibility audit.

    Raised when the divergence source of an interior vertex patch is not
    orthogonal to rigid-body motions, which indicates the provided stress
    field does not come from a converged discrete solve.
    """


class InternalError(EquistressError):
    """An internal invariant was violated (a bug, not a user error)."""
