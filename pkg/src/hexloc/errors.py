"""Exception types shared across the package."""


class NoSignalError(ValueError):
    """Raised when an operation receives silent (all-zero) input."""


class AmbiguousEstimateError(RuntimeError):
    """Raised when no azimuth stands out; carries the scored spectrum."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class UnlocalizableError(RuntimeError):
    """Raised when the bearing geometry admits no usable intersection."""


class SceneConfigError(ValueError):
    """Raised for malformed scene/array configuration; names the bad key."""
