from .im_exception import NumericalException


class SingularModelException(NumericalException):
    """Raised when a partial derivative vanishes on the test grid."""


class InconclusiveException(NumericalException):
    """Raised when too many grid points had to be excluded."""
