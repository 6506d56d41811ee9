class ImException(Exception):
    """Base exception for the inference library."""


class ConfigurationException(ImException):
    """Raised when inputs or run configuration are invalid."""


class DomainException(ConfigurationException):
    """Raised when a parameter lies outside its open parameter space."""


class NumericalException(ImException):
    """Raised when a numerical procedure fails."""
