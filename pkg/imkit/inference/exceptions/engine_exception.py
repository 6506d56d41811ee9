from .im_exception import NumericalException


class EmptyFocalSetException(NumericalException):
    """Raised when a focal set is empty (non-empty focal sets are assumed)."""


class SamplerException(NumericalException):
    """Raised when a conditional sampler cannot produce draws."""
