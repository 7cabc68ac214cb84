"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/format/parameter problems
exit with 1, numeric failures with 2.
"""


class SatDjsccError(Exception):
    """Base class for all package errors."""


class ParameterError(SatDjsccError, ValueError):
    """An argument is outside its physical or mathematical domain."""


class ConfigError(SatDjsccError, ValueError):
    """A configuration document is missing, malformed, or inconsistent."""


class StructureError(SatDjsccError, ValueError):
    """A structural invariant is violated (e.g. a reducible Markov chain)."""


class ShapeError(SatDjsccError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class FormatError(SatDjsccError, ValueError):
    """A binary container is corrupt; carries the failing byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(SatDjsccError, ArithmeticError):
    """A numeric routine failed to converge or produced non-finite values."""


class GraphError(SatDjsccError, RuntimeError):
    """Misuse of the autodiff graph (e.g. backward on a consumed graph)."""
