"""Exception and warning types shared across the package."""


class ArbiterError(Exception):
    """Base class for analysis errors raised by this package."""


class SchemaError(ArbiterError, ValueError):
    """An input document or object violates its declared schema."""


class InfeasibleTargetError(ArbiterError):
    """Moment-matching targets cannot be reached by exponential tilting."""


class SeparationError(ArbiterError):
    """The propensity model shows (quasi-)complete separation."""


class DegenerateCellError(ArbiterError):
    """A weighted outcome cell needed by an estimator has zero mass."""

    def __init__(self, cell: str, message: str | None = None):
        self.cell = cell
        super().__init__(message or f"weighted cell {cell!r} has zero mass")


class ProtocolError(ArbiterError):
    """Arbitration protocol misuse: wrong recipient, hash mismatch, bad config."""


class PositivityWarning(UserWarning):
    """A covariate stratum is present in only one of the two trials."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before reaching its tolerance."""


class CovarianceWarning(UserWarning):
    """A covariance or correlation matrix was degenerate or had to be repaired."""
