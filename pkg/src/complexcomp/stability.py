"""Linear stability of base and composed Runge-Kutta flows on ``y' = lambda y``."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .composition import CompositionCoefficients
from .errors import InvalidParameter, PoleAtZ, UnboundedOnAxis
from .flows import ButcherTableau

SCAN_STEP = 0.01
SCAN_LIMIT = 100.0
BISECT_TOL = 1e-10
POLE_COND = 1e14


def stability_value(tab: ButcherTableau, z) -> complex:
    """Amplification factor ``1 + z b^T (I - zA)^{-1} 1`` by a direct solve.

    Raises :class:`PoleAtZ` when ``I - zA`` is numerically singular.
    """
    z = complex(z)
    s = tab.stages
    m = np.eye(s, dtype=complex) - z * tab.A
    if np.linalg.cond(m) > POLE_COND:
        raise PoleAtZ(f"I - zA is singular at z={z}")
    k = np.linalg.solve(m, np.ones(s, dtype=complex))
    return 1.0 + z * complex(tab.b @ k)


def stability_values(tab: ButcherTableau, z) -> np.ndarray:
    """Vectorised :func:`stability_value`; poles come back as ``inf``."""
    z = np.asarray(z, dtype=complex)
    flat = z.ravel()
    s = tab.stages
    m = np.eye(s)[None, :, :] - flat[:, None, None] * tab.A[None, :, :]
    out = np.empty(flat.shape, dtype=complex)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(m)
    good = np.isfinite(cond) & (cond <= POLE_COND)
    if np.any(good):
        rhs = np.ones((int(good.sum()), s, 1), dtype=complex)
        k = np.linalg.solve(m[good], rhs)[..., 0]
        out[good] = 1.0 + flat[good] * (k @ tab.b)
    out[~good] = np.inf
    return out.reshape(z.shape)


def composed_stability_value(tab: ButcherTableau, g1: complex, g2: complex, z) -> float:
    """``Re(P(g2 z) P(g1 z))``; either factor at a pole raises :class:`PoleAtZ`."""
    return float((stability_value(tab, g2 * z) * stability_value(tab, g1 * z)).real)


def composed_stability_values(tab: ButcherTableau, g1: complex, g2: complex, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    a = stability_values(tab, g2 * z)
    b = stability_values(tab, g1 * z)
    with np.errstate(invalid="ignore"):
        prod = (a * b).real
    prod[~(np.isfinite(a) & np.isfinite(b))] = np.inf
    return prod


def base_magnitude(tab: ButcherTableau) -> Callable:
    """Evaluator ``z -> |P(z)|`` accepting scalars or arrays."""

    def evaluate(z):
        return np.abs(stability_values(tab, z))

    return evaluate


def composed_magnitude(tab: ButcherTableau, coeffs: CompositionCoefficients | None = None) -> Callable:
    """Evaluator ``z -> |P_c(z)|`` for the composition matched to ``tab.order``."""
    if coeffs is None:
        coeffs = CompositionCoefficients.for_order(tab.order)

    def evaluate(z):
        return np.abs(composed_stability_values(tab, coeffs.gamma1, coeffs.gamma2, z))

    return evaluate


@dataclass
class StabilityGrid:
    """Magnitudes on a uniform grid; ``values[i, j]`` sits at ``x[i] + 1j * y[j]``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    values: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)

    @property
    def z(self) -> np.ndarray:
        return self.x[:, None] + 1j * self.y[None, :]

    @property
    def membership(self) -> np.ndarray:
        return self.values <= 1.0


def scan_region(evaluator: Callable, box, nx: int, ny: int) -> StabilityGrid:
    xmin, xmax, ymin, ymax = (float(v) for v in box)
    if nx < 2 or ny < 2:
        raise InvalidParameter("need nx, ny >= 2")
    if xmax <= xmin or ymax <= ymin:
        raise InvalidParameter("box must have xmin < xmax and ymin < ymax")
    grid = StabilityGrid(xmin, xmax, ymin, ymax, nx, ny, np.empty((nx, ny)))
    grid.values = np.asarray(evaluator(grid.z), dtype=float).reshape(nx, ny)
    return grid


def real_axis_crossing(evaluator: Callable, step: float = SCAN_STEP, limit: float = SCAN_LIMIT, tol: float = BISECT_TOL) -> float:
    """Leftmost point of the stable interval on the negative real axis.

    Scans ``0, -step, -2 step, ...`` down to ``-limit`` for the first node where
    the magnitude exceeds one, then bisects the bracket to ``tol``. Raises
    :class:`UnboundedOnAxis` if the magnitude stays at or below one throughout.
    """

    def mag(x):
        return float(np.asarray(evaluator(np.array([complex(x)])))[0])

    n = int(round(limit / step))
    xs = -step * np.arange(n + 1)
    vals = np.asarray(evaluator(xs.astype(complex)), dtype=float)
    outside = np.nonzero(~(vals <= 1.0))[0]
    if outside.size == 0:
        raise UnboundedOnAxis(f"|P| <= 1 on all of [-{limit}, 0]")
    i = int(outside[0])
    if i == 0:
        raise InvalidParameter("evaluator exceeds one at the origin")
    inside, out = xs[i - 1], xs[i]
    while inside - out > tol:
        mid = 0.5 * (inside + out)
        if mag(mid) <= 1.0:
            inside = mid
        else:
            out = mid
    return 0.5 * (inside + out)


def crossing_or_sentinel(evaluator: Callable) -> float:
    """:func:`real_axis_crossing`, reporting ``-inf`` for an unbounded interval."""
    try:
        return real_axis_crossing(evaluator)
    except UnboundedOnAxis:
        return -np.inf


def write_stability_csv(path, base: StabilityGrid, composed: StabilityGrid):
    """Row-major ``x,y,mag_base,mag_composed`` over a shared grid."""
    if base.values.shape != composed.values.shape:
        raise InvalidParameter("grids differ in shape")
    xs, ys = base.x, base.y
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "mag_base", "mag_composed"])
        for i in range(base.nx):
            for j in range(base.ny):
                w.writerow([repr(float(xs[i])), repr(float(ys[j])), repr(float(base.values[i, j])), repr(float(composed.values[i, j]))])
