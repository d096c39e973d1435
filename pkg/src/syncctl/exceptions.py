"""
Errors raised by :mod:`syncctl`.

Everything derives from :class:`SyncctlError`. Problems with the input
(shapes, configuration, hypotheses that rule out synchronization) are also
:class:`ValueError` subclasses; numerical failures are
:class:`RuntimeError` subclasses.
"""

from typing import Any, Optional


class SyncctlError(Exception):
    """Base class for all syncctl errors."""


class InvalidDimension(SyncctlError, ValueError):
    """Matrix or field dimensions are missing, too small or inconsistent."""


class RowConditionViolated(SyncctlError, ValueError):
    """Row sums of the coupling matrix differ, so no reduced matrix exists."""


class EmptyControlRegion(SyncctlError, ValueError):
    """The control region contains no interior grid node."""


class NotSynchronizable(SyncctlError, ValueError):
    """The coupling pair satisfies neither H1 nor H2."""


class LinearSolveFailure(SyncctlError, RuntimeError):
    """The implicit step solve broke down."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        #: time step index at which the solve failed (None for the factorization)
        self.step = step


class NotConverged(SyncctlError, RuntimeError):
    """An iterative solve stopped before reaching its target tolerance."""

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        #: best available (partial) result
        self.result = result


class BracketFailure(SyncctlError, RuntimeError):
    """Bisection could not bracket the minimal time."""

    def __init__(self, message: str, T_hi: float, achieved_norm: float):
        super().__init__(message)
        self.T_hi = T_hi
        self.achieved_norm = achieved_norm


class ConfigError(SyncctlError, ValueError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Configuration text is not well formed."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    """A configuration value violates a constraint."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        #: dotted path of the offending field, e.g. ``matrices.A``
        self.field = field


class UnknownField(ValidationError):
    """A configuration object contains a key that is not recognized."""

    def __init__(self, field: str):
        super().__init__(field, "unknown field")


class IoError(SyncctlError, OSError):
    """Reading or writing a file failed."""

    def __init__(self, message: str, path: Any = None):
        super().__init__(f"{message}: {path}" if path is not None else message)
        self.path = path
