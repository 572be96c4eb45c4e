"""Double composition of a one-step flow with a complex-conjugate step pair.

For a base flow of order ``p`` the composed map ``y -> Phi_{g2 tau}(Phi_{g1 tau}(y))``
with ``g1 + g2 = 1`` and ``g1**(p+1) + g2**(p+1) = 0`` returns a complex state.
Its real part is an order ``p + 1`` approximation and ``c_hat * |imag part|`` is
an estimate of the local error of that approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateCoefficients, InvalidOrder


def gamma_coefficients(p: int) -> tuple[complex, complex]:
    """Conjugate step fractions ``(g1, g2)`` for a base method of order ``p``."""
    if int(p) != p or p < 1:
        raise InvalidOrder(f"base order must be a positive integer, got {p!r}")
    a = math.pi / (p + 1)
    g1 = complex(0.5, 0.5 * math.sin(a) / (1.0 + math.cos(a)))
    return g1, g1.conjugate()


def error_constant(p: int, g1: complex, g2: complex) -> tuple[float, float, float]:
    """Return ``(c_hat1, c_hat2, c_hat)`` scaling ``|Im(Psi)|`` to an error estimate.

    The ratio of the two leading error constants of the base method is taken as
    ``p + 2``. Both ratios are used in magnitude and ``c_hat`` is their maximum.
    """
    u = g2 * g1 ** (p + 1)
    v = g1 * g2 ** (p + 1)
    w = g1 ** (p + 2) + g2 ** (p + 2)
    scale = max(abs(u), abs(v), 1.0)
    if abs(u.imag) <= 1e-14 * scale or abs(v.imag) <= 1e-14 * scale:
        raise DegenerateCoefficients("imaginary denominators vanish")
    c1 = abs(u.real / u.imag)
    c2 = abs(v.real / v.imag + (p + 2) * w.real / v.imag)
    return c1, c2, max(c1, c2)


@dataclass(frozen=True)
class CompositionCoefficients:
    p: int
    gamma1: complex
    gamma2: complex
    c_hat: float
    c_hat1: float
    c_hat2: float

    @classmethod
    def for_order(cls, p: int) -> "CompositionCoefficients":
        g1, g2 = gamma_coefficients(p)
        c1, c2, c = error_constant(p, g1, g2)
        return cls(p, g1, g2, c, c1, c2)

    def swapped(self) -> "CompositionCoefficients":
        return CompositionCoefficients(self.p, self.gamma2, self.gamma1, self.c_hat, self.c_hat1, self.c_hat2)


@dataclass
class ComposedStepOutput:
    approx: np.ndarray
    err_est: float
    raw: np.ndarray
    rhs_evals: int = 0
    newton_iters: int = 0


def composed_step(flow, prob, t, y, tau, coeffs: Optional[CompositionCoefficients] = None) -> ComposedStepOutput:
    """One step of the complex double composition of ``flow``.

    ``flow`` is any object with an integer ``order`` and a
    ``step(prob, t, y, tau)`` method returning a ``StepResult``.
    """
    if coeffs is None:
        coeffs = CompositionCoefficients.for_order(flow.order)
    y = np.atleast_1d(np.asarray(y))
    first = flow.step(prob, t, y, coeffs.gamma1 * tau)
    second = flow.step(prob, t + coeffs.gamma1 * tau, first.state, coeffs.gamma2 * tau)
    raw = np.asarray(second.state, dtype=complex)
    return ComposedStepOutput(
        approx=raw.real.copy(),
        err_est=coeffs.c_hat * float(np.linalg.norm(raw.imag)),
        raw=raw,
        rhs_evals=first.rhs_evals + second.rhs_evals,
        newton_iters=first.newton_iters + second.newton_iters,
    )


class ComposedFlow:
    """Base flow wrapped with its composition coefficients."""

    def __init__(self, base, coeffs: Optional[CompositionCoefficients] = None):
        self.base = base
        self.coeffs = coeffs if coeffs is not None else CompositionCoefficients.for_order(base.order)
        self.name = "c" + getattr(base, "name", type(base).__name__)

    @property
    def order(self) -> int:
        return self.base.order + 1

    @property
    def estimator_order(self) -> int:
        # exponent used by the step update is 1/(p+1) with p the base order
        return self.base.order

    def step(self, prob, t, y, tau) -> ComposedStepOutput:
        return composed_step(self.base, prob, t, y, tau, self.coeffs)

    def __repr__(self):
        return f"ComposedFlow({self.base!r})"
