#!/usr/bin/env python3
"""
Exception hierarchy for oodkit
Every error carries the exit code the CLI maps it to
"""

from typing import Optional, Tuple

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class OodkitError(Exception):
    """Base class for all library errors"""
    exit_code = EXIT_RUNTIME


class ConfigError(OodkitError):
    """Invalid or missing configuration value"""
    exit_code = EXIT_USAGE

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ParameterError(OodkitError, ValueError):
    """A numeric operation was called outside its preconditions"""

    def __init__(self, name: str, message: str):
        self.name = name
        self.detail = message
        super().__init__(f"{name}: {message}")


class DimensionMismatchError(OodkitError, ValueError):
    """Two operands disagree on shape"""

    def __init__(self, what: str, left: Tuple[int, ...], right: Tuple[int, ...]):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{what}: dimension mismatch {self.left} vs {self.right}")


class DataFormatError(OodkitError, ValueError):
    """Malformed input file, located by byte offset or line number"""

    def __init__(self, path: str, message: str, offset: Optional[int] = None,
                 line: Optional[int] = None):
        self.path = str(path)
        self.offset = offset
        self.line = line
        where = ""
        if offset is not None:
            where = f" at byte offset {offset}"
        elif line is not None:
            where = f" at line {line}"
        super().__init__(f"{self.path}{where}: {message}")


class NumericalError(OodkitError, ArithmeticError):
    """Factorization failure or non-finite values during a computation"""
