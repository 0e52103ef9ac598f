"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (config 2, data 3, numeric 4).
"""


class DaclError(Exception):
    exit_code = 1


class ConfigError(DaclError, ValueError):
    exit_code = 2


class ShapeError(DaclError, ValueError):
    """Arrays that do not chain through a network or optimizer."""

    exit_code = 2


class DataError(DaclError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(DaclError, ArithmeticError):
    exit_code = 4
