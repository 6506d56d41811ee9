from .im_exception import NumericalException


class PicardDivergenceException(NumericalException):
    """Raised when the Picard operator stops contracting."""


class DomainExitException(NumericalException):
    """Raised when a Picard iterate leaves the ball B_b(u0)."""


class FieldUnboundedException(NumericalException):
    """Raised when a characteristic field is not finite on its rectangle."""


class ReachException(NumericalException):
    """Raised when a characteristic does not reach the reference slice."""


class DependenceException(NumericalException):
    """Raised when traced invariants are not functionally independent."""


class QuadratureException(NumericalException):
    """Raised when adaptive quadrature does not reach its tolerance."""
