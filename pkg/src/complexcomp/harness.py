"""Experiment drivers, error metrics and CSV emission."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .adaptive import AdaptiveConfig, IntegrationTrace, StepRecord, advance, integrate_adaptive, integrate_fixed
from .bpl import BPLFlow
from .composition import ComposedFlow
from .errors import InvalidParameter, UnknownScheme
from .flows import SCHEMES, EmbeddedFlow, RungeKuttaFlow, make_tableau
from .problems import ProblemSpec, reference_solution
from .stability import StabilityGrid, base_magnitude, composed_magnitude, crossing_or_sentinel, scan_region

_SCHEME_KEYS = {s.lower(): s for s in SCHEMES}


def make_flow(name: str, composed: bool = False, alpha: Optional[float] = None):
    """Flow object for a scheme name.

    ``"rk4"`` is the base method, ``"crk4"`` (or ``composed=True``) its complex
    composition and ``"bpl5"`` the BPL integrator truncated at order 5. Tableaux
    carrying an embedded pair come back as :class:`EmbeddedFlow` so the trace
    gets their built-in estimate.
    """
    key = name.strip().lower()
    if key.startswith("c") and (key[1:] in _SCHEME_KEYS or key[1:].startswith("bpl")):
        key, composed = key[1:], True
    if key.startswith("bpl"):
        try:
            p = int(key[3:] or 5)
        except ValueError:
            raise UnknownScheme(f"unknown scheme: {name}") from None
        base = BPLFlow(p)
    elif key in _SCHEME_KEYS:
        tab = make_tableau(_SCHEME_KEYS[key], alpha=alpha)
        if tab.has_embedded and not composed:
            return EmbeddedFlow(tab)
        base = RungeKuttaFlow(tab)
    else:
        raise UnknownScheme(f"unknown scheme: {name}")
    return ComposedFlow(base) if composed else base


def trapezoid_weights(taus) -> np.ndarray:
    """Weights of the records in the trapezoid sum over ``t_1..t_N``.

    Interior records get ``(tau_n + tau_{n+1}) / 2``, the last one ``tau_N / 2``;
    the initial point carries no error and is left out.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        return taus
    w = np.empty_like(taus)
    w[:-1] = 0.5 * (taus[:-1] + taus[1:])
    w[-1] = 0.5 * taus[-1]
    return w


def trace_exact_errors(trace: IntegrationTrace, exact_fn) -> np.ndarray:
    """``|y_n - y(t_n)|`` per record; ``exact_fn`` maps times to states."""
    if trace.accepted == 0:
        return np.zeros(0)
    ex = np.asarray(exact_fn(trace.times[1:]), dtype=float).reshape(trace.accepted, -1)
    return np.linalg.norm(trace.states[1:] - ex, axis=-1)


def global_error(trace: IntegrationTrace, exact_fn) -> float:
    """Trapezoid-weighted sum of the pointwise errors over the run."""
    errs = trace_exact_errors(trace, exact_fn)
    return float(np.sum(trapezoid_weights(trace.taus) * errs))


def roc_sequence(errors, taus) -> np.ndarray:
    """Slopes ``log(e_{j+1}/e_j) / log(tau_{j+1}/tau_j)``; a zero error gives NaN."""
    errors = np.asarray(errors, dtype=float)
    taus = np.asarray(taus, dtype=float)
    if errors.shape != taus.shape or errors.size < 1:
        raise InvalidParameter("errors and taus must have the same nonzero length")
    out = np.full(errors.size - 1, np.nan)
    for j in range(errors.size - 1):
        if errors[j] > 0 and errors[j + 1] > 0:
            out[j] = math.log10(errors[j + 1] / errors[j]) / math.log10(taus[j + 1] / taus[j])
    return out


def global_ratio(exact_errors, estimates, weights, normalize: bool = False) -> float:
    """Trapezoid integral of ``|exact / estimate|``; optionally divided by the span."""
    exact_errors = np.asarray(exact_errors, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not exact_errors.shape == estimates.shape == weights.shape:
        raise InvalidParameter("exact errors, estimates and weights differ in length")
    if np.any(estimates <= 0):
        raise InvalidParameter("estimates must be floored to positive values")
    total = float(np.sum(weights * np.abs(exact_errors / estimates)))
    if normalize:
        total /= float(np.sum(weights)) if weights.size else 1.0
    return total


@dataclass
class LocalErrorProfile:
    """Estimate and true one-step error of a flow started from exact states."""

    times: np.ndarray
    estimates: np.ndarray
    local_errors: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(np.diff(self.times))

    def max_log_ratio(self, floor: float = 1e-15) -> float:
        """Largest ``|log10(estimate / error)|`` over steps with error above ``floor``."""
        keep = self.local_errors >= floor
        if not np.any(keep):
            return float("nan")
        est = np.maximum(self.estimates[keep], np.finfo(float).tiny)
        return float(np.max(np.abs(np.log10(est / self.local_errors[keep]))))

    def ratio(self, normalize: bool = False, floor: float = 1e-16) -> float:
        return global_ratio(self.local_errors, np.maximum(self.estimates, floor), self.weights, normalize)


def local_error_profile(flow, spec: ProblemSpec, times, states=None) -> LocalErrorProfile:
    """Step ``flow`` once from each exact state ``y(t_n)`` and compare with ``y(t_{n+1})``.

    ``states`` defaults to the problem's exact solution at ``times``.
    """
    times = np.asarray(times, dtype=float)
    if states is None:
        states = np.asarray(spec.exact(times), dtype=float).reshape(times.size, -1)
    est = np.empty(times.size - 1)
    err = np.empty(times.size - 1)
    for n in range(times.size - 1):
        y, e, _ = advance(flow, spec.problem, times[n], states[n], times[n + 1] - times[n])
        est[n] = e
        err[n] = np.linalg.norm(y - states[n + 1])
    return LocalErrorProfile(times, est, err)


def fixed_grid(t0: float, t_end: float, tau: float) -> np.ndarray:
    """Record times of :func:`integrate_fixed` for the same arguments, with ``t0``."""
    n_full = int(np.floor((t_end - t0) / tau + 1e-9))
    t = t0 + tau * np.arange(n_full + 1)
    if t_end - t[-1] > 1e-9 * max(tau, 1.0):
        t = np.append(t, t_end)
    return t


@dataclass
class ConvergenceReport:
    scheme: str
    taus: list = field(default_factory=list)
    global_errors: list = field(default_factory=list)
    rhs_evals: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)

    @property
    def roc(self) -> np.ndarray:
        if len(self.taus) < 2:
            return np.zeros(0)
        return roc_sequence(self.global_errors, self.taus)


def run_convergence_study(scheme: str, spec: ProblemSpec, taus: Sequence[float], composed: bool = False) -> ConvergenceReport:
    taus = [float(t) for t in taus]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise InvalidParameter("taus must be strictly decreasing")
    flow = make_flow(scheme, composed)
    report = ConvergenceReport(getattr(flow, "name", scheme))
    exact_fn = _exact_fn(spec)
    for tau in taus:
        trace = integrate_fixed(flow, spec.problem, spec.t0, spec.y0, tau, spec.t_end)
        if not trace.ok:
            raise IntegrationFailed(trace)
        report.taus.append(tau)
        report.global_errors.append(global_error(trace, exact_fn))
        report.rhs_evals.append(trace.total_rhs_evals)
        report.wall_times.append(trace.wall_time)
    return report


class IntegrationFailed(RuntimeError):
    """A driver run ended early; the partial trace is attached."""

    def __init__(self, trace: IntegrationTrace):
        super().__init__(trace.failure)
        self.trace = trace


@dataclass
class ComparisonRow:
    scheme: str
    tau: Optional[float]
    global_error: float
    ratio: float
    rhs_evals: int
    steps: int
    wall_time: float


def run_comparison(
    schemes: Sequence[str],
    spec: ProblemSpec,
    taus: Optional[Sequence[float]] = None,
    adaptive: Optional[AdaptiveConfig] = None,
) -> list[ComparisonRow]:
    """Run every scheme on the same grid (or controller) and tabulate cost and accuracy.

    ``ratio`` is the global ratio of true local errors to the scheme's estimates
    along the fixed grid; it is NaN for flows without an estimate and for
    adaptive runs.
    """
    if (taus is None) == (adaptive is None):
        raise InvalidParameter("give exactly one of taus or an adaptive config")
    exact_fn = _exact_fn(spec)
    rows = []
    for name in schemes:
        flow = make_flow(name)
        runs = [(None, adaptive)] if adaptive is not None else [(float(t), None) for t in taus]
        for tau, cfg in runs:
            if cfg is not None:
                trace = integrate_adaptive(flow, spec.problem, cfg, spec.t0, spec.y0)
            else:
                trace = integrate_fixed(flow, spec.problem, spec.t0, spec.y0, tau, spec.t_end)
            if not trace.ok:
                raise IntegrationFailed(trace)
            ratio = float("nan")
            if tau is not None and isinstance(flow, (ComposedFlow, EmbeddedFlow)):
                grid = trace.times
                profile = local_error_profile(flow, spec, grid, _states_at(spec, grid))
                ratio = profile.ratio()
            rows.append(
                ComparisonRow(
                    scheme=getattr(flow, "name", name),
                    tau=tau,
                    global_error=global_error(trace, exact_fn),
                    ratio=ratio,
                    rhs_evals=trace.total_rhs_evals,
                    steps=trace.accepted,
                    wall_time=trace.wall_time,
                )
            )
    return rows


def evals_for_error(report: ConvergenceReport, target: float) -> float:
    """Rhs evaluations needed to reach ``target`` global error, by log-log interpolation."""
    e = np.log10(np.asarray(report.global_errors))
    n = np.log10(np.asarray(report.rhs_evals, dtype=float))
    order = np.argsort(e)
    e, n = e[order], n[order]
    x = math.log10(target)
    if not e[0] <= x <= e[-1]:
        raise InvalidParameter(f"target {target} outside the studied error range")
    return float(10 ** np.interp(x, e, n))


def stability_grids(scheme: str, box, nx: int, ny: int) -> tuple[StabilityGrid, StabilityGrid]:
    tab = make_tableau(_SCHEME_KEYS.get(scheme.lower(), scheme))
    return scan_region(base_magnitude(tab), box, nx, ny), scan_region(composed_magnitude(tab), box, nx, ny)


def stability_crossings(scheme: str) -> tuple[float, float]:
    """Real-axis crossings ``(base, composed)``; ``-inf`` marks an unbounded interval."""
    tab = make_tableau(_SCHEME_KEYS.get(scheme.lower(), scheme))
    return crossing_or_sentinel(base_magnitude(tab)), crossing_or_sentinel(composed_magnitude(tab))


def _exact_fn(spec: ProblemSpec) -> Callable:
    if spec.exact is not None:
        return spec.exact
    return lambda t: reference_solution(spec, t)


def _states_at(spec: ProblemSpec, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return np.asarray(_exact_fn(spec)(times), dtype=float).reshape(times.size, -1)


TRACE_HEADER_TAIL = ("err_est", "exact_err")


def write_trace_csv(path, trace: IntegrationTrace, exact_fn: Optional[Callable] = None):
    """``t,tau,y_0..y_{d-1},err_est,exact_err`` with shortest round-trip floats.

    The first row is the initial state with empty ``tau`` and ``err_est``.
    """
    d = np.atleast_1d(trace.y0).size
    errs = trace_exact_errors(trace, exact_fn) if exact_fn is not None else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "tau", *[f"y_{i}" for i in range(d)], *TRACE_HEADER_TAIL])
        w.writerow([repr(float(trace.t0)), "", *[repr(float(v)) for v in np.atleast_1d(trace.y0)], "", "0.0" if errs is not None else ""])
        for k, rec in enumerate(trace.records):
            exact = repr(float(errs[k])) if errs is not None else ""
            w.writerow([repr(float(rec.t)), repr(float(rec.tau)), *[repr(float(v)) for v in rec.state], repr(float(rec.err_est)), exact])


def read_trace_csv(path) -> tuple[IntegrationTrace, Optional[np.ndarray]]:
    """Inverse of :func:`write_trace_csv`; returns the trace and the exact-error column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["t", "tau"] or tuple(header[-2:]) != TRACE_HEADER_TAIL:
        raise InvalidParameter(f"{path}: not a trace file")
    d = len(header) - 4
    first = body[0]
    trace = IntegrationTrace(float(first[0]), np.array([float(v) for v in first[2 : 2 + d]]))
    exact = []
    for row in body[1:]:
        state = np.array([float(v) for v in row[2 : 2 + d]])
        trace.append(StepRecord(float(row[0]), float(row[1]), state, float(row[2 + d]), 0))
        exact.append(float(row[3 + d]) if row[3 + d] else math.nan)
    return trace, (np.array(exact) if exact and not np.all(np.isnan(exact)) else None)


def write_rows_csv(path, header: Sequence[str], rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
