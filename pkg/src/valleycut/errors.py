"""Exception types shared across the package."""


class ValleycutError(Exception):
    """Base class for package errors."""


class ConfigError(ValleycutError):
    """Invalid configuration (grid size, bandwidth bounds, manifest keys...)."""


class DomainError(ValleycutError, ValueError):
    """Input outside its documented domain (score not in [0,1], bad kappa...)."""


class BandwidthError(ValleycutError, ValueError):
    """Non-positive or otherwise unusable bandwidth."""


class InsufficientDataError(ValleycutError):
    """Not enough samples / observations to produce the requested estimate."""


class EmptyReportError(ValleycutError):
    """Metric computation invoked on an empty record set."""
