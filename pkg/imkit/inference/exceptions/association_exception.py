from .im_exception import NumericalException


class InversionException(NumericalException):
    """Raised when data cannot be inverted to an auxiliary value."""


class StencilException(NumericalException):
    """Raised when a finite-difference stencil leaves the parameter space."""
