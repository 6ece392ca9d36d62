"""Exception hierarchy shared by every module.

The CLI maps each family onto its own exit code, so library code raises the
most specific class that applies.
"""


class RestoreError(Exception):
    """Base class for all package errors."""


class ArgumentError(RestoreError, ValueError):
    """A caller passed an argument outside the operation's domain."""


class ValidationError(RestoreError, ValueError):
    """Data read from disk or constructed in memory violates an invariant."""


class FormatError(RestoreError):
    """A file is missing or not in the expected on-disk format."""


class StateError(RestoreError):
    """The operation cannot run in the current state (e.g. empty library)."""


class ConfigurationError(RestoreError):
    """Operator pool or config file cannot support the request."""


class ResourceError(RestoreError):
    """The request would exceed a resource budget."""
