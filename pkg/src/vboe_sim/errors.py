"""Exception hierarchy shared by every layer of the simulator."""

from __future__ import annotations


class VBOEError(Exception):
    """Base class for all errors raised by vboe_sim."""


class IndexOutOfRange(VBOEError, IndexError):
    pass


class EqualIndices(VBOEError, ValueError):
    pass


class ZeroNormProjection(VBOEError, ArithmeticError):
    """A projection had (numerically) zero norm, which means the state was corrupted."""


class DimensionMismatch(VBOEError, ValueError):
    pass


class BadDistribution(VBOEError, ValueError):
    pass


class UnknownVertex(VBOEError, KeyError):
    pass


class InvalidFlow(VBOEError, ValueError):
    pass


class PatternFormatError(VBOEError, ValueError):
    """Pattern file failed schema validation. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ServerTimeout(VBOEError, RuntimeError):
    """The server broke its contract (no answer, or an answer that is not a bit)."""


class ProtocolOrderViolation(VBOEError, RuntimeError):
    pass


class NotATrap(VBOEError, ValueError):
    pass


class InvalidParams(VBOEError, ValueError):
    pass


class BadParams(VBOEError, ValueError):
    pass


class DirectionMismatch(VBOEError, ValueError):
    pass


class EmptyInput(VBOEError, ValueError):
    pass


class ConfigError(VBOEError, ValueError):
    pass


class ParseError(VBOEError, ValueError):
    pass


class MismatchFound(VBOEError):
    def __init__(self, mismatches: list):
        self.mismatches = mismatches
        super().__init__(f"{len(mismatches)} mismatch(es): {mismatches}")

    def __reduce__(self):
        return (type(self), (self.mismatches,))


class TrialError(VBOEError):
    """Wraps an error raised inside one experiment trial."""

    def __init__(self, trial: int, cause: BaseException):
        self.trial = trial
        self.cause = cause
        super().__init__(f"trial {trial}: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return (type(self), (self.trial, self.cause))
