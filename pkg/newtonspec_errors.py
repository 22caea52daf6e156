"""
newtonspec exception hierarchy

Every error raised by the library derives from NewtonSpecError. Input
validation errors additionally derive from ValueError.
"""

from typing import Optional, Sequence


class NewtonSpecError(Exception):
    """Base exception for newtonspec errors"""
    pass


class InvalidSurfaceError(NewtonSpecError, ValueError):
    """Surface or ambient space parameters are invalid"""
    pass


class OffSurfaceError(NewtonSpecError, ValueError):
    """Point does not lie on the surface"""
    pass


class DegenerateFrameError(NewtonSpecError):
    """Frame construction hit a vanishing pivot"""
    pass


class InvalidOrderError(NewtonSpecError, ValueError):
    """Curvature order r is odd or out of range"""
    pass


class InvalidIndexError(NewtonSpecError, ValueError):
    """Index tuples of a Kronecker symbol are malformed"""
    pass


class UnsupportedError(NewtonSpecError):
    """Requested (kind, n) combination has no implementation"""
    pass


class DegenerateElementError(NewtonSpecError):
    """Simplex with vanishing volume"""
    pass


class NotEllipticError(NewtonSpecError):
    """T^r fails to be positive definite somewhere on the surface"""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None,
                 margin: float = float("nan")):
        super().__init__(message)
        self.point = None if point is None else [float(v) for v in point]
        self.margin = float(margin)


class NotConvergedError(NewtonSpecError):
    """Eigensolver stopped before reaching the residual tolerance"""

    def __init__(self, message: str, residuals: Optional[Sequence[float]] = None,
                 iterations: int = 0):
        super().__init__(message)
        self.residuals = [] if residuals is None else [float(v) for v in residuals]
        self.iterations = iterations


class InvalidMassError(NewtonSpecError, ValueError):
    """Mass matrix is not symmetric positive definite"""
    pass


class InvalidInputError(NewtonSpecError, ValueError):
    """Generic invalid argument"""
    pass


class ReportWriteError(NewtonSpecError, OSError):
    """Report or export file could not be written"""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path
