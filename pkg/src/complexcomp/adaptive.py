"""Time-marching drivers: fixed step, imaginary-part adaptive, residual-based BPL."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .composition import ComposedFlow, ComposedStepOutput
from .errors import IntegrationError, InvalidParameter, StiffnessStall
from .flows import EmbeddedFlow

ESTIMATE_FLOOR = 1e-16
STALL_STEPS = 100


@dataclass
class StepRecord:
    t: float
    tau: float
    state: np.ndarray
    err_est: float
    rhs_evals: int
    residual_evals: int = 0


@dataclass
class IntegrationTrace:
    """Accepted steps of a run; the initial state is kept apart from the records."""

    t0: float
    y0: np.ndarray
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    failure: Optional[str] = None
    scheme: str = ""

    def append(self, rec: StepRecord):
        self.records.append(rec)

    @property
    def accepted(self) -> int:
        return len(self.records)

    @property
    def total_rhs_evals(self) -> int:
        return sum(r.rhs_evals for r in self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([self.t0] + [r.t for r in self.records])

    @property
    def states(self) -> np.ndarray:
        return np.array([np.asarray(self.y0, dtype=float)] + [r.state for r in self.records])

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.records])

    @property
    def err_est(self) -> np.ndarray:
        return np.array([r.err_est for r in self.records])

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass
class AdaptiveConfig:
    tol: float
    t_end: float
    tau0: float = 0.1
    safety: float = 0.9
    tau_min: float = 1e-12
    tau_max: Optional[float] = None
    growth_cap: float = 5.0

    def validate(self, t0: float):
        tau_max = self.t_end - t0 if self.tau_max is None else self.tau_max
        if self.tol <= 0 or not 0 < self.safety <= 1 or self.growth_cap <= 1:
            raise InvalidParameter("need tol > 0, 0 < safety <= 1 and growth_cap > 1")
        if not self.tau_min <= self.tau0 <= tau_max:
            raise InvalidParameter("need tau_min <= tau0 <= tau_max")
        return tau_max


def update_step(
    tau: float,
    tol: float,
    err_est: float,
    p: int,
    safety: float = 0.9,
    growth_cap: float = 5.0,
    tau_min: float = 0.0,
    tau_max: float = np.inf,
) -> float:
    """Next step ``safety * tau * (tol / err_est) ** (1 / (p + 1))``, clamped.

    The change per step is limited to a factor ``growth_cap`` either way, then
    the result is clipped to ``[tau_min, tau_max]``.
    """
    new = safety * tau * (tol / err_est) ** (1.0 / (p + 1))
    new = min(max(new, tau / growth_cap), tau * growth_cap)
    return min(max(new, tau_min), tau_max)


def floored_estimate(err_est: float, y) -> float:
    floor = ESTIMATE_FLOOR * (1.0 + float(np.linalg.norm(y)))
    return max(err_est, floor)


def advance(flow, prob, t, y, tau):
    """One step of any supported flow: ``(new_state, err_est, rhs_evals)``."""
    if isinstance(flow, ComposedFlow):
        out: ComposedStepOutput = flow.step(prob, t, y, tau)
        return out.approx, out.err_est, out.rhs_evals
    if isinstance(flow, EmbeddedFlow):
        high, est, res = flow.step(prob, t, y, tau)
        return np.real(high), est, res.rhs_evals
    res = flow.step(prob, t, y, tau)
    return np.real(res.state), 0.0, res.rhs_evals


def integrate_fixed(flow, prob, t0: float, y0, tau: float, t_end: float) -> IntegrationTrace:
    """March with uniform step ``tau``; a last partial step lands on ``t_end``.

    Step failures do not propagate: the trace is returned with ``failure`` set.
    """
    if tau <= 0:
        raise InvalidParameter("tau must be positive")
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    trace = IntegrationTrace(t0, y.copy(), scheme=getattr(flow, "name", ""))
    span = t_end - t0
    n_full = int(np.floor(span / tau + 1e-9))
    steps = [tau] * n_full
    rest = span - n_full * tau
    if rest > 1e-9 * max(tau, 1.0):
        steps.append(rest)
    start = time.perf_counter()
    t = t0
    for n, h in enumerate(steps, 1):
        try:
            y, est, evals = advance(flow, prob, t, y, h)
        except IntegrationError as exc:
            trace.failure = f"step {n} at t={t}: {exc}"
            break
        t = t0 + n * tau if n <= n_full else t_end
        trace.append(StepRecord(t, h, y, est, evals))
    trace.wall_time = time.perf_counter() - start
    return trace


def integrate_adaptive(flow, prob, cfg: AdaptiveConfig, t0: float, y0) -> IntegrationTrace:
    """Accept-always stepping driven by the flow's own error estimate.

    ``flow`` is a :class:`ComposedFlow` (imaginary-part estimate) or an
    :class:`EmbeddedFlow`. Each step is taken with the current ``tau`` and the
    estimate sets the next one; steps are never rejected.
    """
    if not isinstance(flow, (ComposedFlow, EmbeddedFlow)):
        raise InvalidParameter("adaptive stepping needs a composed or embedded flow")
    tau_max = cfg.validate(t0)
    p = flow.estimator_order
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    trace = IntegrationTrace(t0, y.copy(), scheme=getattr(flow, "name", ""))
    t, tau = t0, cfg.tau0
    stalled = 0
    start = time.perf_counter()
    while cfg.t_end - t > cfg.tau_min:
        h = min(tau, cfg.t_end - t)
        y, est, evals = advance(flow, prob, t, y, h)
        t = cfg.t_end if h == cfg.t_end - t else t + h
        trace.append(StepRecord(t, h, y, est, evals))
        tau = update_step(h, cfg.tol, floored_estimate(est, y), p, cfg.safety, cfg.growth_cap, cfg.tau_min, tau_max)
        stalled = stalled + 1 if tau <= cfg.tau_min else 0
        if stalled >= STALL_STEPS:
            trace.wall_time = time.perf_counter() - start
            raise StiffnessStall(f"step size pinned at tau_min={cfg.tau_min} near t={t}")
    trace.wall_time = time.perf_counter() - start
    return trace


def integrate_residual_bpl(
    flow,
    prob,
    tol: float,
    tau_start: float,
    t0: float,
    y0,
    t_end: float,
    growth: float = 1.1,
    tau_min: float = 1e-12,
    max_trials: int = 500,
) -> IntegrationTrace:
    """BPL stepping where each step is the largest ``tau`` with residual below ``tol``.

    From the previous accepted step (``tau_start`` at first) the trial step is
    multiplied by ``growth`` while the residual stays under ``tol``; the last
    admissible trial is accepted. If even the first trial fails, it is divided
    by ``growth`` until admissible or ``tau_min`` is reached.
    """
    if tol <= 0 or growth <= 1:
        raise InvalidParameter("need tol > 0 and growth > 1")
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    trace = IntegrationTrace(t0, y.copy(), scheme=getattr(flow, "name", "") + "-residual")
    t, tau = t0, tau_start
    start = time.perf_counter()
    while t_end - t > tau_min:
        exp = flow.expansion(prob, t, y)
        remaining = t_end - t
        trial = min(tau, remaining)
        evals = 1
        if exp.residual(trial) < tol:
            while trial < remaining and evals < max_trials:
                nxt = min(trial * growth, remaining)
                evals += 1
                if exp.residual(nxt) >= tol:
                    break
                trial = nxt
        else:
            admissible = False
            while trial > tau_min and evals < max_trials:
                trial = max(trial / growth, tau_min)
                evals += 1
                if exp.residual(trial) < tol:
                    admissible = True
                    break
            if not admissible:
                trace.failure = f"residual above tol down to tau={trial} at t={t}"
                break
        y = np.real(exp.value(trial))
        t = t_end if trial == remaining else t + trial
        trace.append(StepRecord(t, trial, y, 0.0, exp.jet_evals, evals))
        tau = trial
    trace.wall_time = time.perf_counter() - start
    return trace
