"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the CLI reports for it.
"""
from __future__ import annotations


class KehModeError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        self.module = module

    def to_json(self) -> dict:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class InvalidParameterError(KehModeError, ValueError):
    """A configuration value violates an operation's precondition."""

    exit_code = 2


class InvalidInputError(KehModeError, ValueError):
    """Input data is malformed, empty or inconsistent."""

    exit_code = 3


class TraceTooShortError(InvalidInputError):
    pass


class NoSignalError(InvalidInputError):
    """A trace produced no classifiable window after stop excision."""


class UndefinedEntropyError(InvalidInputError):
    """Class entropy is zero, so relative mutual information is undefined."""


class NonConvergenceError(KehModeError):
    """An iterative solver hit its budget before certifying its solution.

    ``last`` holds the final iterate so callers can still inspect or use it.
    """

    exit_code = 4

    def __init__(self, message: str, last=None, *, module: str | None = None):
        super().__init__(message, module=module)
        self.last = last
