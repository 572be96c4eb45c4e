"""Borel-Pade-Laplace one-step integrator.

The local Taylor series of the solution is generated with truncated power
series arithmetic (:class:`TaylorJet`), Borel transformed, continued by a Pade
approximant and brought back with a Gauss-Laguerre rule for the Laplace
integral. Once a :class:`BPLExpansion` has been built at ``(t, y)``, the flow
and its residual can be evaluated for any (complex) step at negligible cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidParameter, PoleOnContour, QuadratureFailure, UnsupportedProblem
from .flows import StepResult

POLE_TOL = 1e-13
DEFAULT_GAUSS_POINTS = 20


class TaylorJet:
    """Truncated power series ``sum_k c_k h**k`` with ``k <= order``."""

    __slots__ = ("c",)
    __array_priority__ = 100

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=complex)

    @classmethod
    def constant(cls, value, order):
        c = np.zeros(order + 1, dtype=complex)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, value, order):
        """Jet of ``value + h``."""
        c = np.zeros(order + 1, dtype=complex)
        c[0] = value
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @property
    def order(self) -> int:
        return self.c.size - 1

    def _coerce(self, other):
        if isinstance(other, TaylorJet):
            if other.c.size != self.c.size:
                raise InvalidParameter("jets of different orders")
            return other.c
        c = np.zeros_like(self.c)
        c[0] = other
        return c

    def __add__(self, other):
        return TaylorJet(self.c + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return TaylorJet(self.c - self._coerce(other))

    def __rsub__(self, other):
        return TaylorJet(self._coerce(other) - self.c)

    def __neg__(self):
        return TaylorJet(-self.c)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if not isinstance(other, TaylorJet):
            return TaylorJet(self.c * other)
        return TaylorJet(np.convolve(self.c, self._coerce(other))[: self.c.size])

    __rmul__ = __mul__

    def reciprocal(self):
        a = self.c
        if a[0] == 0:
            raise ZeroDivisionError("reciprocal of a jet with zero constant term")
        r = np.zeros_like(a)
        r[0] = 1.0 / a[0]
        for k in range(1, a.size):
            r[k] = -np.dot(a[1 : k + 1], r[k - 1 :: -1][:k]) / a[0]
        return TaylorJet(r)

    def __truediv__(self, other):
        if not isinstance(other, TaylorJet):
            return TaylorJet(self.c / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if int(n) != n:
            raise InvalidParameter("only integer powers of jets are supported")
        n = int(n)
        if n < 0:
            return self.reciprocal() ** (-n)
        result = TaylorJet.constant(1.0, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __repr__(self):
        return f"TaylorJet({self.c!r})"


def jexp(x):
    if not isinstance(x, TaylorJet):
        return np.exp(x)
    a = x.c
    e = np.zeros_like(a)
    e[0] = np.exp(a[0])
    k = np.arange(a.size)
    for n in range(1, a.size):
        # n e_n = sum_{j=1..n} j a_j e_{n-j}
        e[n] = np.dot(k[1 : n + 1] * a[1 : n + 1], e[n - 1 :: -1][:n]) / n
    return TaylorJet(e)


def _sincos(x: TaylorJet):
    a = x.c
    s = np.zeros_like(a)
    c = np.zeros_like(a)
    s[0], c[0] = np.sin(a[0]), np.cos(a[0])
    k = np.arange(a.size)
    for n in range(1, a.size):
        ka = k[1 : n + 1] * a[1 : n + 1]
        s[n] = np.dot(ka, c[n - 1 :: -1][:n]) / n
        c[n] = -np.dot(ka, s[n - 1 :: -1][:n]) / n
    return TaylorJet(s), TaylorJet(c)


def jsin(x):
    return _sincos(x)[0] if isinstance(x, TaylorJet) else np.sin(x)


def jcos(x):
    return _sincos(x)[1] if isinstance(x, TaylorJet) else np.cos(x)


def taylor_coefficients(prob, t, y, p: int) -> np.ndarray:
    """Normalized Taylor coefficients ``Y[k] = y^(k)(t) / k!`` for ``k = 0..p``.

    Returns an array of shape ``(p + 1, d)``.
    """
    if prob.jet_rhs is None:
        raise UnsupportedProblem(f"problem {prob.label!r} provides no jet right-hand side")
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    d = y.size
    Y = np.zeros((p + 1, d), dtype=complex)
    Y[0] = y
    tj = TaylorJet.variable(t, p)
    for k in range(p):
        jets = [TaylorJet(Y[:, i]) for i in range(d)]
        f = prob.jet_rhs(tj, jets)
        for i in range(d):
            fi = f[i]
            val = fi.c[k] if isinstance(fi, TaylorJet) else (fi if k == 0 else 0.0)
            Y[k + 1, i] = val / (k + 1)
    return Y


def borel_transform(Y) -> np.ndarray:
    """Coefficients ``Y[k+1] / k!`` of the Borel transform of the derivative series."""
    Y = np.asarray(Y)
    if Y.shape[0] < 2:
        raise InvalidParameter("need at least two Taylor coefficients")
    fact = np.array([math.factorial(k) for k in range(Y.shape[0] - 1)], dtype=float)
    return Y[1:] / fact.reshape((-1,) + (1,) * (Y.ndim - 1))


@dataclass
class PadeApproximant:
    """Rational function ``q(x) / r(x)`` with ``r[0] == 1``; ``degraded`` counts dropped denominator degrees."""

    q: np.ndarray
    r: np.ndarray
    degraded: int = 0

    @property
    def dq(self) -> int:
        return self.q.size - 1

    @property
    def dr(self) -> int:
        return self.r.size - 1

    def numerator(self, x):
        return np.polyval(self.q[::-1], x)

    def denominator(self, x):
        return np.polyval(self.r[::-1], x)

    def __call__(self, x):
        return self.numerator(x) / self.denominator(x)

    def derivative(self, x):
        q = np.polyval(self.q[::-1], x)
        r = np.polyval(self.r[::-1], x)
        dq = np.polyval(np.polyder(self.q[::-1]), x) if self.dq else 0.0
        dr = np.polyval(np.polyder(self.r[::-1]), x) if self.dr else 0.0
        return (dq * r - q * dr) / (r * r)

    def taylor(self, n: int) -> np.ndarray:
        """First ``n`` Taylor coefficients of ``q / r`` at the origin."""
        out = np.zeros(n, dtype=np.result_type(self.q, self.r))
        for k in range(n):
            acc = self.q[k] if k < self.q.size else 0.0
            for j in range(1, min(k, self.dr) + 1):
                acc -= self.r[j] * out[k - j]
            out[k] = acc
        return out


def pade_approximant(series, dq: int, dr: int, rcond: float = 1e-13) -> PadeApproximant:
    """[dq/dr] Pade approximant of a scalar power series.

    When the Toeplitz system for the denominator is singular the denominator
    degree is lowered (and the numerator raised) until it is solvable; ``dr = 0``
    gives back the truncated series.
    """
    a = np.asarray(series)
    if dq < 0 or dr < 0 or a.size < dq + dr + 1:
        raise InvalidParameter("series too short for the requested degrees")
    a = a[: dq + dr + 1]
    # singularity is judged against the series size, not just the block's own scale
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    degraded = 0
    while dr > 0:
        T = np.array([[a[dq + i - j] if dq + i - j >= 0 else 0.0 for j in range(1, dr + 1)] for i in range(1, dr + 1)])
        rhs = -a[dq + 1 : dq + dr + 1]
        sv = np.linalg.svd(T, compute_uv=False)
        if sv[-1] > rcond * max(sv[0], scale):
            r = np.concatenate([[1.0], np.linalg.solve(T, rhs)])
            break
        dr -= 1
        dq += 1
        degraded += 1
    else:
        r = np.ones(1, dtype=a.dtype)
    q = np.array([sum(r[j] * a[k - j] for j in range(min(k, dr) + 1)) for k in range(dq + 1)])
    return PadeApproximant(q, r, degraded)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return self.nodes.size


def _laguerre(n, x):
    """``(L_n(x), L_{n-1}(x))`` by the three-term recurrence."""
    p0, p1 = np.ones_like(x), 1.0 - x
    if n == 0:
        return p0, np.zeros_like(x)
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1 - x) * p1 - k * p0) / (k + 1)
    return p1, p0


@lru_cache(maxsize=None)
def _gauss_laguerre_cached(n: int):
    k = np.arange(n)
    J = np.diag(2.0 * k + 1.0) + np.diag(k[1:].astype(float), 1) + np.diag(k[1:].astype(float), -1)
    x = np.linalg.eigvalsh(J)
    for _ in range(10):
        Ln, Lm = _laguerre(n, x)
        # x L_n' = n (L_n - L_{n-1})
        dx = Ln * x / (n * (Ln - Lm))
        x = x - dx
        if np.all(np.abs(dx) <= 1e-15 * np.maximum(1.0, x)):
            break
    if not np.all(np.abs(dx) <= 1e-9 * np.maximum(1.0, x)) or np.any(x <= 0):
        raise QuadratureFailure(f"Laguerre root polishing failed for n={n}")
    Ln1, _ = _laguerre(n + 1, x)
    w = x / ((n + 1) ** 2 * Ln1**2)
    # the zeroth moment is exactly one; rescaling removes the recurrence drift
    return x, w / w.sum()


def gauss_laguerre(n: int = DEFAULT_GAUSS_POINTS) -> QuadratureRule:
    """Gauss-Laguerre rule exact for ``x**k exp(-x)`` on ``[0, inf)``, ``k < 2n``."""
    if not 1 <= n <= 64:
        raise InvalidParameter("number of Gauss-Laguerre points must lie in [1, 64]")
    x, w = _gauss_laguerre_cached(int(n))
    return QuadratureRule(x.copy(), w.copy())


def pade_degrees(p: int) -> tuple[int, int]:
    """Numerator/denominator degrees for the length-``p`` Borel series."""
    return math.ceil((p - 1) / 2), (p - 1) // 2


class BPLExpansion:
    """Resummed local solution at ``(t, y)``; evaluable for any step ``tau``."""

    def __init__(self, prob, t, y, p: int, n_gauss: int = DEFAULT_GAUSS_POINTS):
        if p < 1:
            raise InvalidParameter("truncation order must be >= 1")
        self.prob, self.t, self.p = prob, t, p
        self.y = np.atleast_1d(np.asarray(y, dtype=complex))
        self.coefficients = taylor_coefficients(prob, t, self.y, p)
        borel = borel_transform(self.coefficients)
        dq, dr = pade_degrees(p)
        self.pades = [pade_approximant(borel[:, i], dq, dr) for i in range(self.y.size)]
        self.rule = gauss_laguerre(n_gauss)
        self.jet_evals = p

    def _points(self, tau):
        pts = self.rule.nodes * tau
        for pd in self.pades:
            if pd.dr and np.any(np.abs(pd.denominator(pts)) < POLE_TOL):
                raise PoleOnContour(f"Pade pole on the Laplace contour for tau={tau}")
        return pts

    def value(self, tau) -> np.ndarray:
        pts = self._points(tau)
        w = self.rule.weights
        return self.y + tau * np.array([np.dot(pd(pts), w) for pd in self.pades])

    def derivative(self, tau) -> np.ndarray:
        """Exact ``d/dtau`` of :meth:`value` via the rational derivative of each approximant."""
        pts = self._points(tau)
        w, xi = self.rule.weights, self.rule.nodes
        return np.array([np.dot(pd(pts) + tau * xi * pd.derivative(pts), w) for pd in self.pades])

    def residual(self, tau) -> float:
        phi = self.value(tau)
        f = np.asarray(self.prob.rhs(self.t + tau, phi))
        return float(np.linalg.norm(self.derivative(tau) - f))


def bpl_step(prob, t, y, tau, p: int, n_gauss: int = DEFAULT_GAUSS_POINTS) -> np.ndarray:
    return BPLExpansion(prob, t, y, p, n_gauss).value(tau)


def bpl_residual(prob, t, y, tau, p: int, n_gauss: int = DEFAULT_GAUSS_POINTS) -> float:
    return BPLExpansion(prob, t, y, p, n_gauss).residual(tau)


class BPLFlow:
    """One-step flow of truncation order ``p`` usable as a composition base."""

    def __init__(self, p: int = 5, n_gauss: int = DEFAULT_GAUSS_POINTS):
        self.p = p
        self.n_gauss = n_gauss
        self.name = f"bpl{p}"

    @property
    def order(self) -> int:
        return self.p

    def expansion(self, prob, t, y) -> BPLExpansion:
        return BPLExpansion(prob, t, y, self.p, self.n_gauss)

    def step(self, prob, t, y, tau) -> StepResult:
        if tau == 0:
            raise InvalidParameter("step size must be non-zero")
        exp = self.expansion(prob, t, y)
        state = exp.value(tau)
        if np.isrealobj(y) and np.isreal(tau) and np.isreal(t):
            state = state.real
        return StepResult(state, exp.jet_evals, 0)

    def __repr__(self):
        return f"BPLFlow(p={self.p}, n_gauss={self.n_gauss})"
