"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class UnsupportedCaseError(NotImplementedError):
    """The requested combination has no exact formula implemented."""


class AssumptionError(ValueError):
    """A theorem's hypothesis required by the operation is not met."""


class ConvergenceError(RuntimeError):
    """Numerical integration or root finding did not reach its tolerance."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class PrecisionWarning(UserWarning):
    """Rounding error in a recursion may exceed the configured tolerance."""
