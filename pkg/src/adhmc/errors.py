"""Exception and warning types raised across the package."""


class AdhmcError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(AdhmcError, ValueError):
    pass


class NoConvergence(AdhmcError, RuntimeError):
    pass


class SingularMatrix(AdhmcError, ValueError):
    pass


class DivergenceGuard(AdhmcError, OverflowError):
    pass


class DimensionMismatch(AdhmcError, ValueError):
    pass


class NonFiniteGradient(AdhmcError, FloatingPointError):
    pass


class NoSampler(AdhmcError, TypeError):
    pass


class ParseError(AdhmcError, ValueError):
    pass


class EmptyDataset(AdhmcError, ValueError):
    pass


class NonFiniteState(AdhmcError, FloatingPointError):
    """Raised when a trajectory leaves the finite range.

    Attributes:
        step: index of the leapfrog step at which the state became non-finite.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at leapfrog step {step}")


class TooFewPoints(AdhmcError, ValueError):
    pass


class NoClusters(AdhmcError, RuntimeError):
    pass


class TooLarge(AdhmcError, ValueError):
    pass


class DegenerateEnsemble(AdhmcError, ValueError):
    pass


class ConfigError(AdhmcError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class UnknownTarget(AdhmcError, KeyError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class GridTooCoarse(UserWarning):
    pass
