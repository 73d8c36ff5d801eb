"""Exception hierarchy shared across the package.

Every error raised on purpose derives from BanditLabError so the service and
CLI layers can map failures to HTTP status codes / exit codes uniformly.
"""


class BanditLabError(Exception):
    """Base class for all banditlab errors."""


class ConfigError(BanditLabError):
    """Invalid configuration value (bad hyperparameter, malformed spec)."""


class InputError(BanditLabError):
    """Invalid runtime input: dimension mismatch, index out of range, empty data."""


class ProtocolError(BanditLabError):
    """step/observe alternation violated, or an agent used before pretraining."""


class NumericalError(BanditLabError):
    """Numerical failure that must be reported, never papered over."""


class DataFormatError(BanditLabError):
    """Malformed external data: CSV parse failure, bad IDX magic, truncated snapshot."""
