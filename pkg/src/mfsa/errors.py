"""Exception types raised across the package."""


class InsufficientSampleError(ValueError):
    """Raised when a neighborhood asks for more points than the cloud holds."""


class NoValidEstimatesError(ValueError):
    """Raised when every local estimate was flagged invalid."""


class NoRootError(RuntimeError):
    """Raised when the likelihood score has no (or no unique) sign change.

    Attributes
    ----------
    bracket : tuple of float
        The interval that was scanned.
    sign_changes : int
        Number of sign changes found on the scan grid.
    """

    def __init__(self, message, bracket, sign_changes=0):
        super().__init__(message)
        self.bracket = bracket
        self.sign_changes = sign_changes


class DegenerateDesignError(ValueError):
    """Raised when a least-squares design matrix is rank deficient."""


class CalibrationError(ValueError):
    """Raised when a fitted correction is rejected (e.g. not monotone)."""
