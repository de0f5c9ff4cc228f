"""Exception hierarchy for the vortex solvers.

Each class carries the exit code the CLI reports for it.
"""


class VortexError(Exception):
    """Base class for every error raised by the solvers."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        """Machine-readable form used in CLI error reports."""

        return dict(
            error=type(self).__name__,
            exit_code=self.exit_code,
            message=self.message,
            details={key: repr(val) for key, val in sorted(self.details.items())},
        )


##############################################################################
# Configuration (exit 2)


class ConfigurationError(VortexError):
    """Bad parameters, unknown branch tags, failed shooting bracket."""

    exit_code = 2


##############################################################################
# Data (exit 3)


class DataError(VortexError):
    """Non-finite or malformed input data, missing files."""

    exit_code = 3


class GridMismatchError(DataError):
    """Two radial functions live on different grids."""


class DomainError(DataError):
    """Argument outside the mathematical domain (r <= 0, non-integrable head)."""


class ExtrapolationError(DataError):
    """Interpolation requested outside the grid with no extension attached."""


class ResolutionError(DataError):
    """Angular resolution too coarse for the sampled field."""


class PreconditionError(DataError):
    """A caller-asserted precondition does not hold for the data."""


##############################################################################
# Convergence (exit 4)


class ConvergenceError(VortexError):
    """Iterative solver did not reach its tolerance."""

    exit_code = 4


class LinearAlgebraError(ConvergenceError):
    """Sparse direct solve broke down."""


##############################################################################
# Integrity (exit 5)


class IntegrityError(VortexError):
    """A computed object violates a structural property it must have."""

    exit_code = 5


class KernelIntegrityError(IntegrityError):
    """Homogeneous basis failed a Wronskian, residual or asymptotic check."""


class SignViolationError(KernelIntegrityError):
    """A solution that must keep its sign changed sign."""


class DegenerateModeError(IntegrityError):
    """Homogeneous correction system is singular."""
