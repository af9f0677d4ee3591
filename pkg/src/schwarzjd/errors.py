"""Exception types shared across the package."""


class SchwarzJDError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SchwarzJDError, ValueError):
    """A precondition on an argument was violated."""


class SingularMatrixError(SchwarzJDError):
    """A matrix was singular to working precision during factorization."""


class IndefiniteMatrixError(SchwarzJDError):
    """An SPD factorization met a non-positive pivot.

    Carries the 0-based index of the offending pivot so callers can log it
    before falling back to a symmetric-indefinite factorization.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"non-positive pivot at index {pivot}")


class ShiftOutOfRangeError(InvalidArgumentError):
    """A preconditioner shift reached the deflation threshold of the coarse operator."""


class ClusterTooLargeError(InvalidArgumentError):
    """The targeted cluster does not fit on the initialization mesh."""


class EmptyBasisError(SchwarzJDError):
    """Orthonormalization dropped every vector and no basis remains."""


class StagnationError(SchwarzJDError):
    """The trial subspace stopped growing and the residual norm stalled."""


class ProblemTooLargeError(InvalidArgumentError):
    """A dense reference computation was requested beyond its feasibility guard."""
