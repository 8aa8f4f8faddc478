"""Exception hierarchy shared by the solver modules."""


class WhiskerError(Exception):
    """Base class for all solver errors."""


class GridError(WhiskerError, ValueError):
    """Bad grid sizes or non-finite samples."""


class ResonanceError(WhiskerError):
    """Exact resonance found while certifying a frequency."""

    def __init__(self, k, message=None):
        self.k = tuple(int(v) for v in k)
        super().__init__(message or f"resonant frequency at k={self.k}")


class NearResonanceError(ResonanceError):
    """A small divisor fell below the configured floor."""


class SolvabilityError(WhiskerError):
    """Right-hand side of a cohomological equation has non-zero average."""


class EmbeddingDegeneracyError(WhiskerError):
    """DK^T DK is singular somewhere on the grid."""


class TwistDegeneracyError(WhiskerError):
    """An averaged twist matrix (avg A, avg Q or avg S) is singular."""


class CohomologyDegeneracyError(WhiskerError):
    """A vector field family fails to span the cohomology of the torus."""


class GeometryDegenerateError(WhiskerError):
    """Neumann series for the Gram inverse does not converge."""


class HyperbolicityError(WhiskerError):
    """Rate estimates do not certify contraction/expansion."""


class SplittingDivergedError(WhiskerError):
    """Graph-transform iteration failed to converge."""


class DomainEscapeError(WhiskerError):
    """The embedding left the domain of definition of the map."""


class ConvergenceError(WhiskerError):
    """Newton iteration stopped without reaching the tolerance.

    ``report`` carries the per-iteration history gathered before the stop.
    """

    def __init__(self, message, report=None, reason="max-iterations"):
        super().__init__(message)
        self.report = report
        self.reason = reason


class DistinctToriError(WhiskerError):
    """Two tori could not be phase-locked onto each other."""

    def __init__(self, message, tau=None, mismatch=None):
        super().__init__(message)
        self.tau = tau
        self.mismatch = mismatch


class ExactnessWarning(UserWarning):
    """|lambda| is not controlled by the residual: the map may not be exact."""


class HyperbolicityWarning(UserWarning):
    """Window growth rates outside the expected bounds."""


class NonQuadraticWarning(UserWarning):
    """Newton residual ratios indicate loss of quadratic convergence."""


class IntegratorWarning(UserWarning):
    """Flow verification defect above tolerance: integrator error dominates."""
