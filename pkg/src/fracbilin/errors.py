"""Exception types raised by the toolkit."""


class FracBilinError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FracBilinError):
    pass


class ValidationError(FracBilinError):
    """A configuration value violates an invariant; the message names the field."""


class NonFiniteSample(FracBilinError):
    pass


class DomainError(FracBilinError, ValueError):
    pass


class DimensionMismatch(FracBilinError, ValueError):
    pass


class HistoryTooShort(FracBilinError):
    pass


class SingularSystem(FracBilinError):
    """The time-step matrix could not be factorized."""


class LineSearchStall(FracBilinError):
    pass


class NotConverged(FracBilinError):
    pass


class DegeneratePair(FracBilinError):
    pass
