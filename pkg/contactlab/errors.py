"""Exceptions raised by contactlab."""


class ContactLabError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(ContactLabError, ValueError):
    """A precondition on an argument does not hold."""


class OracleCapError(InvalidParameterError):
    """An exact oracle was asked for a system larger than its cap."""


class ConvergenceError(ContactLabError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, last_estimate=None, iterations=0):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.iterations = iterations


class BracketError(ContactLabError, RuntimeError):
    """A bisection interval does not bracket a sign change."""


class AuditError(ContactLabError, RuntimeError):
    """Incremental rate bookkeeping disagrees with a full recomputation."""


class ConfigError(ContactLabError, ValueError):
    """An experiment configuration is malformed."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UsageError(ContactLabError):
    """Command-line arguments could not be parsed."""
