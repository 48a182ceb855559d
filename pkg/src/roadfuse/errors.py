"""Exception types shared across the package."""


class NetworkError(ValueError):
    """Invalid road-network structure or input document."""


class PositiveDefiniteError(RuntimeError):
    """A covariance matrix stayed non positive definite after jitter escalation."""


class ProtocolError(RuntimeError):
    """A wire message failed validation (schema version or content hash)."""


class SearchBudgetError(RuntimeError):
    """A joint-walk search would exceed the configured evaluation budget."""


class ConfigError(ValueError):
    """Invalid simulation or CLI configuration."""
