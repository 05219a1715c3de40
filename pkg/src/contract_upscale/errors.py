"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(ValueError):
    """Input data is inconsistent or describes a nonphysical state."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (zero pivot, no convergence, ...)."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
