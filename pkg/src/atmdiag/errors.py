"""Exception hierarchy shared across the package.

Each class carries a CLI exit code so the command-line front end can map
failures without inspecting messages.
"""


class AtmError(Exception):
    exit_code = 1


class ParamError(AtmError, ValueError):
    exit_code = 2


class DomainError(AtmError, ValueError):
    exit_code = 4


class GridMismatch(AtmError, ValueError):
    exit_code = 4


class EmptyInput(AtmError, ValueError):
    exit_code = 3


class RangeError(AtmError, ValueError):
    exit_code = 2


class DegenerateSeries(AtmError, ArithmeticError):
    exit_code = 4


class SingularCovariance(AtmError, ArithmeticError):
    exit_code = 4


class ParseError(AtmError, ValueError):
    exit_code = 3

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(AtmError, ValueError):
    exit_code = 3


class DegenerateData(AtmError, UserWarning):
    """Emitted as a warning when a period's sample has zero spread."""

    exit_code = 3


class IoError(AtmError, OSError):
    exit_code = 3
