"""Exception types shared across the package."""


class LpwError(Exception):
    """Base class for all package errors."""


class FormatError(LpwError, ValueError):
    """Malformed or unreadable file contents."""


class UnsupportedFormatError(FormatError):
    """File parsed fine but uses an unsupported encoding/layout."""


class DomainError(LpwError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(LpwError, ValueError):
    """Invalid or inconsistent configuration values."""


class DegenerateFrameError(LpwError, ValueError):
    """Analysis frame carries no usable signal (e.g. zero energy)."""


class InstabilityError(LpwError, ValueError):
    """A filter or recursion left its stability region."""


class CoverageError(LpwError, ValueError):
    """A coefficient schedule does not cover the signal it is applied to."""


class AlignmentError(LpwError, ValueError):
    """Paired sequences disagree in length beyond the allowed slack."""


class DivergenceError(LpwError, ArithmeticError):
    """A recursive computation produced a non-finite value."""


class NumericError(LpwError, ArithmeticError):
    """Non-finite input where finite values are required."""
