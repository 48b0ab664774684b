"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class IcsohError(Exception):
    """Base class for all package errors."""


class UsageError(IcsohError):
    """Bad invocation: unknown config key, missing argument, invalid flag."""


class DataError(IcsohError):
    """Input data cannot be used: missing file, empty dataset, bad column."""


class NumericalError(IcsohError):
    """A numerical procedure failed (divergence, non-finite loss, ...)."""
