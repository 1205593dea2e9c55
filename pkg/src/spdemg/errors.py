"""Exception types shared across the package.

Every error raised by spdemg derives from :class:`SpdEmgError` so callers
(CLI, service layer) can map failures onto exit codes / HTTP responses
uniformly.
"""


class SpdEmgError(Exception):
    """Base class for all spdemg errors."""


class InvalidInput(SpdEmgError):
    """Arguments violate a documented precondition (shape, range, emptiness)."""


class NotPositiveDefinite(SpdEmgError):
    """A matrix required to be SPD has a non-positive Cholesky pivot."""


class RankDeficient(SpdEmgError):
    """Columns became linearly dependent during orthogonalization."""


class InvalidDiagonal(SpdEmgError):
    """A Cholesky-factor diagonal is not strictly positive."""


class WindowTooLong(SpdEmgError):
    """Requested analysis window exceeds the trial duration."""


class DegenerateInput(SpdEmgError):
    """Input is structurally valid but degenerate for the requested statistic."""


class TrainingDiverged(SpdEmgError):
    """Training loss became non-finite."""


class OdeDiverged(SpdEmgError):
    """ODE vector field returned non-finite values during integration."""


class FormatError(SpdEmgError):
    """A data file does not conform to its documented binary/JSON layout."""


class UnsupportedVersion(SpdEmgError):
    """A data file declares a format version this build does not read."""
