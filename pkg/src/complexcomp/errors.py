"""Exception hierarchy shared by the integrators, analysis tools and CLI."""

from __future__ import annotations


class ComplexCompError(Exception):
    """Base class for every error raised by this package."""


class IntegrationError(ComplexCompError):
    """A step (or a whole run) could not be completed."""


class UnknownScheme(ComplexCompError, KeyError):
    pass


class UnknownProblem(ComplexCompError, KeyError):
    pass


class InvalidParameter(ComplexCompError, ValueError):
    pass


class InvalidOrder(InvalidParameter):
    pass


class DegenerateCoefficients(ComplexCompError, ArithmeticError):
    pass


class StageSolveFailure(IntegrationError):
    """Newton iteration on the implicit stage equations did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual


class NonFiniteRhs(IntegrationError, FloatingPointError):
    pass


class StiffnessStall(IntegrationError):
    pass


class PoleAtZ(ComplexCompError, ZeroDivisionError):
    pass


class UnboundedOnAxis(ComplexCompError):
    """No exit from the stability region was found on the negative real axis."""


class UnsupportedProblem(ComplexCompError):
    pass


class PoleOnContour(IntegrationError):
    pass


class QuadratureFailure(ComplexCompError):
    pass


class OutOfDomain(ComplexCompError, ValueError):
    pass


class InvariantUndefined(ComplexCompError, ValueError):
    pass
