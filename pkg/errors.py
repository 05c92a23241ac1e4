"""
Exception hierarchy shared by every module.

Each error carries the process exit code the command-line front end uses
when the error escapes a subcommand.
"""

from typing import Optional


class ObjectiveError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 4


class ValidationError(ObjectiveError):
    """Invalid input: malformed machines, alphabet mismatches, bad ranges."""

    exit_code = 2


class ParseError(ValidationError):
    """Syntax error in one of the text formats, with its position."""

    def __init__(self, message: str, position: Optional[int] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.position = position
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if position is not None and not where:
            where.append(f"position {position}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class BudgetExceeded(ObjectiveError):
    """An exhaustive enumeration or a sample count would exceed its cap."""

    exit_code = 3

    def __init__(self, what: str, budget: int, required: Optional[int] = None,
                 last_horizon: Optional[int] = None):
        self.what = what
        self.budget = budget
        self.required = required
        self.last_horizon = last_horizon
        message = f"{what} exceeds budget {budget}"
        if required is not None:
            message += f" (needs {required})"
        if last_horizon is not None:
            message += f" at horizon {last_horizon}"
        super().__init__(message)


class InvariantViolation(ObjectiveError):
    """An internal consistency check failed."""

    exit_code = 4
