"""Runge-Kutta one-step flows over (possibly complex) state.

Stage values are computed by forward substitution for explicit tableaux and by
Newton iteration on the stacked stage system otherwise. Every routine accepts a
complex step ``tau`` and a complex time ``t`` so that the same code drives the
sub-steps of a complex composition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter, NonFiniteRhs, StageSolveFailure, UnknownScheme

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
FD_STEP = 1e-7


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Coefficients ``(A, b, c)`` of an s-stage Runge-Kutta method.

    ``b_star`` holds the weights of an embedded companion of order
    ``order_star`` sharing the same stages.
    """

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    b_star: Optional[np.ndarray] = None
    order_star: Optional[int] = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        s = b.size
        if A.shape != (s, s) or c.shape != (s,):
            raise InvalidParameter(f"{self.name}: inconsistent tableau shapes")
        if not np.allclose(A.sum(axis=1), c, rtol=0, atol=1e-14):
            raise InvalidParameter(f"{self.name}: c is not the row sum of A")
        if abs(b.sum() - 1.0) > 1e-14:
            raise InvalidParameter(f"{self.name}: weights do not sum to one")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.b_star is not None:
            b_star = np.asarray(self.b_star, dtype=float)
            if b_star.shape != (s,) or abs(b_star.sum() - 1.0) > 1e-14:
                raise InvalidParameter(f"{self.name}: bad embedded weights")
            object.__setattr__(self, "b_star", b_star)

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def is_explicit(self) -> bool:
        return not np.any(np.triu(self.A))

    @property
    def has_embedded(self) -> bool:
        return self.b_star is not None


@dataclass
class OdeProblem:
    """Right-hand side ``dy/dt = f(t, y)`` together with optional extras.

    ``rhs`` must evaluate on complex ``t`` and complex ``y`` (analytic
    continuation of the real formula). ``jet_rhs`` maps a time jet and a list of
    state jets to a list of jets and is only needed by the Taylor-based flows.
    """

    dim: int
    rhs: Callable[[complex, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[complex, np.ndarray], np.ndarray]] = None
    jet_rhs: Optional[Callable] = None
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    invariant: Optional[Callable[[np.ndarray], float]] = None
    label: str = ""


@dataclass
class StepResult:
    state: np.ndarray
    rhs_evals: int = 0
    newton_iters: int = 0


def _rk2_tableau(alpha):
    if alpha == 0:
        raise InvalidParameter("rk2 requires alpha != 0")
    return ButcherTableau(
        "rk2",
        [[0.0, 0.0], [alpha, 0.0]],
        [1.0 - 1.0 / (2.0 * alpha), 1.0 / (2.0 * alpha)],
        [0.0, alpha],
        order=2,
    )


def _gauss2_tableau():
    r = np.sqrt(3.0) / 6.0
    return ButcherTableau(
        "grk2",
        [[0.25, 0.25 - r], [0.25 + r, 0.25]],
        [0.5, 0.5],
        [0.5 - r, 0.5 + r],
        order=4,
    )


def _lobatto3a_tableau():
    return ButcherTableau(
        "lobattoIIIA3",
        [[0.0, 0.0, 0.0], [5 / 24, 1 / 3, -1 / 24], [1 / 6, 2 / 3, 1 / 6]],
        [1 / 6, 2 / 3, 1 / 6],
        [0.0, 0.5, 1.0],
        order=4,
    )


def _bs3_tableau():
    A = np.zeros((4, 4))
    A[1, 0] = 1 / 2
    A[2, :2] = [0.0, 3 / 4]
    A[3, :3] = [2 / 9, 1 / 3, 4 / 9]
    return ButcherTableau(
        "bs3",
        A,
        [2 / 9, 1 / 3, 4 / 9, 0.0],
        [0.0, 1 / 2, 3 / 4, 1.0],
        order=3,
        b_star=[7 / 24, 1 / 4, 1 / 3, 1 / 8],
        order_star=2,
    )


def _dop5_tableau():
    A = np.zeros((7, 7))
    A[1, :1] = [1 / 5]
    A[2, :2] = [3 / 40, 9 / 40]
    A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
    # c is taken as the exact row sums; the decimal fractions differ in the last ulp
    return ButcherTableau(
        "dop5",
        A,
        A[6].copy(),
        A.sum(axis=1),
        order=5,
        b_star=[5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40],
        order_star=4,
    )


_BUILDERS = {
    "rk1": lambda: ButcherTableau("rk1", [[0.0]], [1.0], [0.0], order=1),
    "rk4": lambda: ButcherTableau(
        "rk4",
        [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]],
        [1 / 6, 1 / 3, 1 / 3, 1 / 6],
        [0.0, 0.5, 0.5, 1.0],
        order=4,
    ),
    "grk2": _gauss2_tableau,
    "lobattoIIIA3": _lobatto3a_tableau,
    "bs3": _bs3_tableau,
    "dop5": _dop5_tableau,
}

SCHEMES = ("rk1", "rk2", "rk4", "grk2", "lobattoIIIA3", "bs3", "dop5")


def make_tableau(name: str, alpha: Optional[float] = None) -> ButcherTableau:
    """Return the Butcher tableau registered under ``name``.

    ``alpha`` is the free node of the two-stage family ``rk2`` (default 1/2,
    the midpoint rule; 1 gives Heun's method). It is ignored for other schemes.
    """
    key = {s.lower(): s for s in SCHEMES}.get(name.lower())
    if key is None:
        raise UnknownScheme(name)
    if key == "rk2":
        return _rk2_tableau(0.5 if alpha is None else float(alpha))
    return _BUILDERS[key]()


def _eval_rhs(prob: OdeProblem, t, y):
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(prob.rhs(t, y))
    if not np.all(np.isfinite(out)):
        raise NonFiniteRhs(f"non-finite right-hand side at t={t}")
    return out


def _fd_jacobian(prob: OdeProblem, t, y):
    # central differences along real directions; valid for holomorphic rhs
    d = y.size
    J = np.empty((d, d), dtype=np.result_type(y, t, float))
    for k in range(d):
        h = FD_STEP * (1.0 + abs(y[k]))
        e = np.zeros(d)
        e[k] = h
        J[:, k] = (prob.rhs(t, y + e) - prob.rhs(t, y - e)) / (2.0 * h)
    return J, 2 * d


def _explicit_stages(tab, prob, t, y, tau, dtype):
    s = tab.stages
    K = np.zeros((s, y.size), dtype=dtype)
    for i in range(s):
        yi = y + tau * (tab.A[i, :i] @ K[:i]) if i else y
        K[i] = _eval_rhs(prob, t + tab.c[i] * tau, yi)
    return K, s, 0


def _newton_stages(tab, prob, t, y, tau, dtype, tol, max_iter):
    s, d = tab.stages, y.size
    A = tab.A
    f0 = _eval_rhs(prob, t, y)
    evals = 1
    K = np.tile(f0, (s, 1)).astype(dtype)
    times = [t + ci * tau for ci in tab.c]
    eye = np.eye(s * d)
    res_norm = np.inf
    for it in range(1, max_iter + 1):
        Y = y + tau * (A @ K)
        F = np.array([_eval_rhs(prob, times[i], Y[i]) for i in range(s)], dtype=dtype)
        evals += s
        G = (K - F).ravel()
        res_norm = np.linalg.norm(G)
        converged = res_norm <= tol * max(1.0, np.linalg.norm(K))
        jac = np.zeros((s * d, s * d), dtype=dtype)
        for i in range(s):
            if prob.jacobian is not None:
                Ji = np.asarray(prob.jacobian(times[i], Y[i]))
            else:
                Ji, n = _fd_jacobian(prob, times[i], Y[i])
                evals += n
            for j in range(s):
                jac[i * d:(i + 1) * d, j * d:(j + 1) * d] = tau * A[i, j] * Ji
        try:
            delta = np.linalg.solve(eye - jac, G)
        except np.linalg.LinAlgError:
            raise StageSolveFailure("singular Newton matrix", res_norm) from None
        K = K - delta.reshape(s, d)
        if not np.all(np.isfinite(K)):
            break
        # the correction from a converged residual is applied too: its error is quadratic in it
        if converged or np.linalg.norm(delta) <= tol * max(1.0, np.linalg.norm(K)):
            return K, evals, it
    raise StageSolveFailure(f"Newton did not converge in {max_iter} iterations", res_norm)


def compute_stages(
    tab: ButcherTableau,
    prob: OdeProblem,
    t,
    y,
    tau,
    *,
    solver: str = "auto",
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
):
    """Stage derivatives ``K`` (shape ``(s, d)``), rhs evaluations, Newton iterations."""
    y = np.atleast_1d(np.asarray(y))
    dtype = np.result_type(y, tau, t, float)
    if solver == "auto":
        solver = "explicit" if tab.is_explicit else "newton"
    if solver == "explicit":
        if not tab.is_explicit:
            raise InvalidParameter(f"{tab.name} is implicit; forward substitution impossible")
        return _explicit_stages(tab, prob, t, y, tau, dtype)
    if solver == "newton":
        return _newton_stages(tab, prob, t, y, tau, dtype, tol, max_iter)
    raise InvalidParameter(f"unknown stage solver {solver!r}")


def rk_step(tab: ButcherTableau, prob: OdeProblem, t, y, tau, *, solver: str = "auto") -> StepResult:
    """Advance ``y`` from ``t`` by one Runge-Kutta step of (complex) size ``tau``."""
    if tau == 0:
        raise InvalidParameter("step size must be non-zero")
    y = np.atleast_1d(np.asarray(y))
    K, evals, iters = compute_stages(tab, prob, t, y, tau, solver=solver)
    return StepResult(y + tau * (tab.b @ K), evals, iters)


def embedded_step(tab: ButcherTableau, prob: OdeProblem, t, y, tau):
    """Return ``(high, est, StepResult)`` where ``est`` is ``|tau * sum((b - b*) K)|``."""
    if not tab.has_embedded:
        raise InvalidParameter(f"{tab.name} has no embedded weights")
    y = np.atleast_1d(np.asarray(y))
    K, evals, iters = compute_stages(tab, prob, t, y, tau)
    high = y + tau * (tab.b @ K)
    est = float(np.linalg.norm(tau * ((tab.b - tab.b_star) @ K)))
    return high, est, StepResult(high, evals, iters)


@dataclass
class RungeKuttaFlow:
    """Numerical flow of a tableau; ``order`` is what a composition sees."""

    tableau: ButcherTableau
    solver: str = "auto"
    name: str = field(default="")

    def __post_init__(self):
        if not self.name:
            self.name = self.tableau.name

    @property
    def order(self) -> int:
        return self.tableau.order

    def step(self, prob, t, y, tau) -> StepResult:
        return rk_step(self.tableau, prob, t, y, tau, solver=self.solver)


@dataclass
class EmbeddedFlow:
    """An embedded pair used as a stepper with its own error estimate."""

    tableau: ButcherTableau
    name: str = field(default="")

    def __post_init__(self):
        if not self.tableau.has_embedded:
            raise InvalidParameter(f"{self.tableau.name} has no embedded weights")
        if not self.name:
            self.name = self.tableau.name

    @property
    def order(self) -> int:
        return self.tableau.order

    @property
    def estimator_order(self) -> int:
        return self.tableau.order_star

    def step(self, prob, t, y, tau):
        return embedded_step(self.tableau, prob, t, y, tau)
