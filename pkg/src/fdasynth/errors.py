"""Exception types mapped onto CLI exit codes."""


class FdaSynthError(Exception):
    exit_code = 1


class ValidationError(FdaSynthError, ValueError):
    """Bad input: malformed files, invalid parameters, missing paths."""

    exit_code = 1


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NumericalError(FdaSynthError, ArithmeticError):
    """A computation produced a degenerate or non-finite result."""

    exit_code = 2
