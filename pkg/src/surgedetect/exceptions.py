"""Exception hierarchy shared across the package."""


class SurgeDetectError(Exception):
    """Base class for all package errors."""


class DomainError(SurgeDetectError, ValueError):
    """An input violates a documented precondition or invariant."""


class ConvergenceError(SurgeDetectError, RuntimeError):
    """An iterative fit failed to converge.

    The last iterate is attached so callers can inspect (or accept) it.
    """

    def __init__(self, message, last_result=None):
        super().__init__(message)
        self.last_result = last_result


class IngestError(SurgeDetectError, ValueError):
    """A data file could not be parsed into a valid annual series."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line
