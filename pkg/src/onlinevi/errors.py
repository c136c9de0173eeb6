"""Semantic exception hierarchy shared across the package."""


class OnlineViError(Exception):
    """Base error for this package."""


class DimensionMismatchError(OnlineViError, ValueError):
    """Vectors that must share a length do not."""


class DomainError(OnlineViError, ValueError):
    """Inputs outside the mathematical domain (nonpositive sigma, NaN, ...)."""


class InvalidPrecisionError(OnlineViError, RuntimeError):
    """A natural-parameter update left the Gaussian family (lambda2 >= 0)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class UnsupportedLossError(OnlineViError, ValueError):
    """Operation has no certified implementation for this loss kind."""


class DataError(OnlineViError, ValueError):
    """Dataset construction or parsing failed."""


class ConfigError(OnlineViError, ValueError):
    """Experiment configuration is invalid."""
