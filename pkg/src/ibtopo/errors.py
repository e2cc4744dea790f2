"""Exception types raised across the package."""


class IBError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(IBError, ValueError):
    pass


class NumericalFailure(IBError, ArithmeticError):
    pass


class GeometryError(IBError, ValueError):
    pass


class ConfigError(IBError, ValueError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class UnconstrainableRegion(IBError):
    """The local extrapolant could not be constrained even at minimum order."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


class InternalError(IBError, RuntimeError):
    pass


class DivergenceError(IBError, FloatingPointError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step
