"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see cli.EXIT_CODES): configuration
problems, file/format problems, and numeric failures are distinguished so
scripts can react to the failure class.
"""


class RltrackError(Exception):
    """Base class for all package errors."""


class ConfigError(RltrackError):
    """Invalid configuration, spec, or argument combination."""


class FormatError(RltrackError):
    """Malformed or truncated binary file."""


class NumericError(RltrackError):
    """Non-finite values or diverging optimization."""


class OutOfBoundsError(RltrackError):
    """Interpolation request outside the volume's validity domain."""


class DegenerateInputError(RltrackError):
    """Geometrically degenerate input (e.g. zero-length streamline)."""
