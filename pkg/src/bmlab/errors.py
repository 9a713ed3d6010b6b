"""Exception hierarchy shared by every module of the package."""


class BMLError(Exception):
    """Base class for all package errors."""


class InvalidField(BMLError, ValueError):
    """A field contains non-finite values or violates a structural constraint."""


class ShapeError(BMLError, ValueError):
    """Array shape does not match the grid or the expected component count."""


class InvalidParameter(BMLError, ValueError):
    """A numerical parameter lies outside its admissible range."""


class GridTooCoarse(BMLError, ValueError):
    """The grid resolves fewer dyadic shells than an operation needs."""


class StepTooLarge(BMLError, ValueError):
    """A time step violates the CFL-type restriction."""


class InvalidFamily(BMLError, ValueError):
    """Unknown or inconsistent test-field family request."""


class ConfigError(BMLError, ValueError):
    """A run configuration failed validation."""


class ContractionFailure(BMLError, RuntimeError):
    """A fixed-point iteration failed to contract."""


class NoContraction(ContractionFailure):
    """Successive differences of the outer iteration stopped decreasing."""


class SmallnessGateFailed(BMLError, RuntimeError):
    """Initial data violate the smallness condition required by the scheme."""

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict
