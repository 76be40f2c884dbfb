class SpdeHmmError(Exception):
    """Base class for all package errors."""


class DomainError(SpdeHmmError, ValueError):
    """An argument lies outside the domain of an operator."""


class ConfigError(SpdeHmmError, ValueError):
    """Invalid or inconsistent configuration.

    ``fields`` maps offending config keys to a human-readable diagnostic.
    """

    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = dict(fields or {})


class BasisMismatchError(SpdeHmmError, ValueError):
    """Two fields live on different eigenbases."""


class StatisticsError(SpdeHmmError, RuntimeError):
    """Not enough data for an estimate (too few replicas or points)."""
