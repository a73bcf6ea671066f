"""Exception types shared across the package."""


class NSDampError(Exception):
    """Base class for all package errors."""


class FieldValidationError(NSDampError):
    """A field failed a structural precondition (shape, finiteness, ...)."""


class HermitianSymmetryError(FieldValidationError):
    """Spectral coefficients are not Hermitian-symmetric (field would be complex)."""


class GridMismatchError(NSDampError):
    """Two objects that must share a grid do not."""


class ConfigError(NSDampError):
    """Invalid, missing, or unknown configuration entry."""


class CheckpointError(NSDampError):
    """Checkpoint payload is corrupted, truncated, or incompatible."""


class BlowUpError(NSDampError):
    """The solution left the finite / bounded regime.

    Carries the time of failure and the last finite norms known to the caller.
    """

    def __init__(self, message, t=None, norms=None):
        super().__init__(message)
        self.t = t
        self.norms = dict(norms) if norms else {}
