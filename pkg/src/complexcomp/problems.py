"""Benchmark initial value problems, their exact solutions and first integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .bpl import jcos, jexp, jsin
from .errors import InvalidParameter, InvariantUndefined, OutOfDomain, UnknownProblem
from .flows import OdeProblem

_INV_E = math.exp(-1.0)


def lambertw(z: float) -> float:
    """Principal branch of the Lambert W function for real ``z >= -1/e``.

    Halley iteration on ``w exp(w) - z`` from a branch-point series near
    ``-1/e`` and a logarithmic guess elsewhere.
    """
    z = float(z)
    if z < -_INV_E:
        if z < -_INV_E - 1e-12:
            raise OutOfDomain(f"W(z) is not real for z={z} < -1/e")
        return -1.0
    if z == 0.0:
        return 0.0
    if z < -0.25:
        q = math.sqrt(max(2.0 * (math.e * z + 1.0), 0.0))
        w = -1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q**3
    elif z < 3.0:
        w = math.log1p(z)
    else:
        lz = math.log(z)
        w = lz - math.log(lz)
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def lambertw_exp(x: float) -> float:
    """``W(exp(x))`` without forming ``exp(x)``; safe for large ``x``."""
    if x < 1.0:
        return lambertw(math.exp(x))
    # solve w + log(w) = x
    w = x - math.log(x)
    for _ in range(60):
        dw = (w + math.log(w) - x) / (1.0 + 1.0 / w)
        w -= dw
        if abs(dw) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


@dataclass(frozen=True)
class ReferenceMethod:
    scheme: str
    tau: float


@dataclass
class ProblemSpec:
    name: str
    problem: OdeProblem
    t0: float
    t_end: float
    y0: np.ndarray
    params: dict = field(default_factory=dict)
    reference: Optional[ReferenceMethod] = None

    @property
    def exact(self):
        return self.problem.exact


def _cubic(params):
    def rhs(t, y):
        return -(y**3)

    def jac(t, y):
        return np.array([[-3.0 * y[0] ** 2]])

    def jet_rhs(t, y):
        return [-(y[0] ** 3)]

    def exact(t):
        t = np.asarray(t, dtype=float)
        return (1.0 / np.sqrt(1.0 + 2.0 * t))[..., None]

    prob = OdeProblem(1, rhs, jac, jet_rhs, exact, label="cubic")
    return ProblemSpec("cubic", prob, 0.0, 2.0, np.array([1.0]), dict(params))


def example1_g(t, lam: float, nodes: int = 20, panel: float = 0.5) -> np.ndarray:
    """``g(t) = int_0^t s sin(s) exp(lam cos s) ds`` by composite Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(ts)
    for k, tk in enumerate(ts):
        n = max(1, math.ceil(abs(tk) / panel))
        edges = np.linspace(0.0, tk, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        s = mid[:, None] + half[:, None] * x[None, :]
        out[k] = np.sum(half[:, None] * w[None, :] * s * np.sin(s) * np.exp(lam * np.cos(s)))
    return out.reshape(np.shape(t))


def _example1(params):
    lam = float(params.get("lambda", 1.0))
    y0 = float(params.get("y0", 1.0))
    if lam == 0:
        raise InvalidParameter("example1 requires lambda != 0")

    def rhs(t, y):
        return np.exp(-lam * y) + np.sin(t)

    def jac(t, y):
        return np.array([[-lam * np.exp(-lam * y[0])]])

    def jet_rhs(t, y):
        return [jexp(-lam * y[0]) + jsin(t)]

    def exact(t):
        t = np.asarray(t, dtype=float)
        g = example1_g(t, lam)
        inner = lam * t + (lam**2 * g + math.exp(lam * (1.0 + y0))) * np.exp(-lam * np.cos(t))
        return (np.log(inner) / lam)[..., None]

    prob = OdeProblem(1, rhs, jac, jet_rhs, exact, label="example1")
    return ProblemSpec("example1", prob, 0.0, 5.0 * math.pi, np.array([y0]), {"lambda": lam, "y0": y0})


def _lambert(params):
    delta = float(params.get("delta", 0.01))
    if delta <= 0 or delta >= 1:
        raise InvalidParameter("lambert requires 0 < delta < 1")
    d = 1.0 / delta - 1.0
    log_d = math.log(d)

    def rhs(t, y):
        return y * y - y**3

    def jac(t, y):
        return np.array([[2.0 * y[0] - 3.0 * y[0] ** 2]])

    def jet_rhs(t, y):
        return [y[0] * y[0] - y[0] ** 3]

    def exact(t):
        t = np.asarray(t, dtype=float)
        w = np.vectorize(lambertw_exp, otypes=[float])(log_d + d - t)
        return (1.0 / (w + 1.0))[..., None]

    prob = OdeProblem(1, rhs, jac, jet_rhs, exact, label="lambert")
    return ProblemSpec("lambert", prob, 0.0, 2.0 / delta, np.array([delta]), {"delta": delta})


def _lotka_volterra(params):
    al = float(params.get("alpha", 1.0))
    be = float(params.get("beta", 1.0))
    de = float(params.get("delta", 1.0))
    et = float(params.get("eta", 1.0))
    u0 = float(params.get("u0", 2.0))
    v0 = float(params.get("v0", 1.0))

    def rhs(t, y):
        u, v = y[0], y[1]
        return np.array([al * u - be * u * v, -de * v + et * u * v])

    def jac(t, y):
        u, v = y[0], y[1]
        return np.array([[al - be * v, -be * u], [et * v, -de + et * u]])

    def jet_rhs(t, y):
        u, v = y
        return [al * u - be * u * v, -de * v + et * u * v]

    def invariant(y):
        y = np.asarray(y, dtype=float)
        u, v = y[..., 0], y[..., 1]
        if np.any(u <= 0) or np.any(v <= 0):
            raise InvariantUndefined("trajectory left the positive quadrant")
        return be * v + et * u - al * np.log(v) - de * np.log(u)

    prob = OdeProblem(2, rhs, jac, jet_rhs, None, invariant, label="lotkaVolterra")
    return ProblemSpec(
        "lotkaVolterra",
        prob,
        0.0,
        20.0,
        np.array([u0, v0]),
        {"alpha": al, "beta": be, "delta": de, "eta": et, "u0": u0, "v0": v0},
        ReferenceMethod("rk4", 1e-5),
    )


def _duffing(params):
    p = {"r": 0.3, "g": 0.0, "a": -1.0, "b": 1.0, "w": 1.2, "c": 0.5, "u0": 1.0, "v0": 0.0}
    p.update({k: float(v) for k, v in params.items()})
    r, g, a, b, w, c = (p[k] for k in "rgabwc")

    def rhs(t, y):
        u, v = y[0], y[1]
        return np.array([v, -(r + g * u * u) * v - a * u - b * u**3 + c * np.cos(w * t)])

    def jac(t, y):
        u, v = y[0], y[1]
        return np.array([[0.0, 1.0], [-2.0 * g * u * v - a - 3.0 * b * u * u, -(r + g * u * u)]])

    def jet_rhs(t, y):
        u, v = y
        return [v, -(r + g * u * u) * v - a * u - b * u**3 + c * jcos(w * t)]

    invariant = None
    if r == 0 and g == 0 and c == 0:

        def invariant(y):
            y = np.asarray(y, dtype=float)
            u, v = y[..., 0], y[..., 1]
            return 0.5 * v * v + 0.5 * a * u * u + 0.25 * b * u**4

    prob = OdeProblem(2, rhs, jac, jet_rhs, None, invariant, label="duffingVdP")
    return ProblemSpec(
        "duffingVdP", prob, 0.0, 100.0, np.array([p["u0"], p["v0"]]), p, ReferenceMethod("grk2", 1e-3)
    )


PROBLEMS: Mapping[str, Callable[[Mapping], ProblemSpec]] = {
    "cubic": _cubic,
    "example1": _example1,
    "lambert": _lambert,
    "lotkaVolterra": _lotka_volterra,
    "duffingVdP": _duffing,
}


def make_problem(name: str, params: Optional[Mapping[str, float]] = None) -> ProblemSpec:
    key = {k.lower(): k for k in PROBLEMS}.get(name.lower())
    if key is None:
        raise UnknownProblem(name)
    spec = PROBLEMS[key](dict(params or {}))
    if "t_end" in (params or {}):
        spec.t_end = float(params["t_end"])
    return spec


def load_params(path) -> dict[str, float]:
    """Read ``problem.key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameter(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("problem."):
            key = key[len("problem."):]
        try:
            out[key] = float(value)
        except ValueError:
            raise InvalidParameter(f"{path}:{lineno}: {value!r} is not a number") from None
    return out


def first_integral_drift(states, spec: ProblemSpec) -> np.ndarray:
    """``|F(y_n) - F(y_0)|`` along a trajectory (rows of ``states``, or a trace)."""
    F = spec.problem.invariant
    if F is None:
        raise InvariantUndefined(f"{spec.name} has no first integral for these parameters")
    if hasattr(states, "states"):
        states = states.states
    states = np.asarray(states, dtype=float)
    return np.abs(F(states) - F(states[0]))


def reference_solution(spec: ProblemSpec, times, tau: Optional[float] = None) -> np.ndarray:
    """States at ``times`` from a fine fixed-step run of the problem's reference method.

    Every requested time must be a multiple of the reference step (to 1e-9).
    """
    from .flows import make_tableau, rk_step

    if spec.reference is None:
        raise InvalidParameter(f"{spec.name} declares no reference method")
    tab = make_tableau(spec.reference.scheme)
    tau = spec.reference.tau if tau is None else tau
    times = np.asarray(times, dtype=float)
    idx = np.rint((times - spec.t0) / tau).astype(np.int64)
    if np.any(np.abs(spec.t0 + idx * tau - times) > 1e-9 * max(1.0, abs(spec.t_end))):
        raise InvalidParameter("requested times are not on the reference grid")
    want = {int(i): k for k, i in enumerate(idx)}
    out = np.empty((times.size, spec.y0.size))
    y = spec.y0.astype(float)
    if 0 in want:
        out[want[0]] = y
    prob = spec.problem
    n_max = int(idx.max(initial=0))
    if tab.is_explicit:
        _explicit_march(tab, prob.rhs, spec.t0, y, tau, n_max, want, out)
        return out
    for n in range(1, n_max + 1):
        y = rk_step(tab, prob, spec.t0 + (n - 1) * tau, y, tau).state
        if n in want:
            out[want[n]] = y
    return out


def _explicit_march(tab, f, t0, y, tau, n_max, want, out):
    # bare loop: the reference runs take millions of steps
    rows = [[(j, tau * a) for j, a in enumerate(tab.A[i, :i]) if a] for i in range(tab.stages)]
    weights = [(i, tau * b) for i, b in enumerate(tab.b) if b]
    c = [float(ci) * tau for ci in tab.c]
    for n in range(1, n_max + 1):
        t = t0 + (n - 1) * tau
        K = []
        for i, row in enumerate(rows):
            yi = y
            for j, a in row:
                yi = yi + a * K[j]
            K.append(f(t + c[i], yi))
        for i, b in weights:
            y = y + b * K[i]
        if n in want:
            out[want[n]] = y
