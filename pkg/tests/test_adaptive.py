import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from complexcomp.adaptive import (
    AdaptiveConfig,
    floored_estimate,
    integrate_adaptive,
    integrate_fixed,
    integrate_residual_bpl,
    update_step,
)
from complexcomp.bpl import BPLFlow
from complexcomp.errors import InvalidParameter, StiffnessStall
from complexcomp.flows import OdeProblem
from complexcomp.harness import make_flow
from complexcomp.problems import first_integral_drift, make_problem

CUBIC = make_problem("cubic")
ZERO = OdeProblem(1, lambda t, y: 0.0 * y)


class TestUpdateStep:
    def test_formula(self):
        assert update_step(0.1, 1e-10, 1e-8, 4) == pytest.approx(0.9 * 0.1 * 1e-2**0.2, rel=1e-14)
        assert update_step(0.1, 1e-10, 1e-8, 4) == pytest.approx(0.0358, abs=5e-5)

    def test_on_tolerance(self):
        assert update_step(0.3, 1e-6, 1e-6, 2) == pytest.approx(0.27, rel=1e-15)

    def test_growth_cap(self):
        assert update_step(0.1, 1e-10, 1e-30, 4) == pytest.approx(0.5, rel=1e-15)

    def test_shrink_cap(self):
        assert update_step(0.1, 1e-30, 1.0, 1) == pytest.approx(0.02, rel=1e-15)

    def test_bounds(self):
        assert update_step(0.1, 1e-10, 1e-30, 4, tau_max=0.2) == 0.2
        assert update_step(1e-12, 1e-30, 1.0, 1, tau_min=1e-12) == 1e-12

    def test_floor(self):
        assert floored_estimate(0.0, np.array([3.0, 4.0])) == pytest.approx(6e-16)
        assert floored_estimate(1e-3, np.array([1.0])) == 1e-3


@settings(max_examples=100, deadline=None)
@given(tau=st.floats(1e-6, 10), tol=st.floats(1e-14, 1e-2), est=st.floats(1e-20, 1), p=st.integers(1, 6))
def test_update_step_ratio_bounded(tau, tol, est, p):
    new = update_step(tau, tol, est, p)
    assert tau / 5 * (1 - 1e-12) <= new <= tau * 5 * (1 + 1e-12)


class TestFixed:
    def test_euler_hand_steps(self):
        trace = integrate_fixed(make_flow("rk1"), CUBIC.problem, 0.0, [1.0], 1.0, 2.0)
        assert trace.states[:, 0].tolist() == [1.0, 0.0, 0.0]
        assert trace.times.tolist() == [0.0, 1.0, 2.0]

    def test_partial_last_step(self):
        trace = integrate_fixed(make_flow("rk4"), CUBIC.problem, 0.0, [1.0], 0.3, 1.0)
        assert trace.times[-1] == 1.0
        assert trace.taus[-1] == pytest.approx(0.1)

    def test_empty_span(self):
        trace = integrate_fixed(make_flow("rk4"), CUBIC.problem, 1.0, [1.0], 0.1, 1.0)
        assert trace.accepted == 0 and trace.ok

    def test_failure_recorded(self):
        blow = OdeProblem(1, lambda t, y: y**3)
        trace = integrate_fixed(make_flow("rk1"), blow, 0.0, [10.0], 1.0, 50.0)
        assert not trace.ok
        assert trace.accepted < 50

    def test_bad_tau(self):
        with pytest.raises(InvalidParameter):
            integrate_fixed(make_flow("rk1"), CUBIC.problem, 0.0, [1.0], 0.0, 1.0)


class TestAdaptive:
    def test_empty_span(self):
        cfg = AdaptiveConfig(tol=1e-8, t_end=1.0, tau0=0.1, tau_max=1.0)
        trace = integrate_adaptive(make_flow("crk4"), CUBIC.problem, cfg, 1.0, [1.0])
        assert trace.accepted == 0

    def test_zero_dynamics_grow_to_cap(self):
        cfg = AdaptiveConfig(tol=1e-8, t_end=100.0, tau0=0.01, tau_max=10.0)
        trace = integrate_adaptive(make_flow("crk2"), ZERO, cfg, 0.0, [1.0])
        taus = trace.taus
        assert taus[:4].tolist() == pytest.approx([0.01, 0.05, 0.25, 1.25])
        assert np.max(taus) == pytest.approx(10.0)
        assert np.all(trace.err_est == 0.0)

    def test_needs_estimate(self):
        cfg = AdaptiveConfig(tol=1e-8, t_end=1.0)
        with pytest.raises(InvalidParameter):
            integrate_adaptive(make_flow("rk4"), CUBIC.problem, cfg, 0.0, [1.0])

    @pytest.mark.parametrize(
        "kwargs",
        [{"tol": 0.0}, {"tau0": 5.0}, {"safety": 1.5}, {"growth_cap": 1.0}, {"tau0": 1e-13}],
    )
    def test_validation(self, kwargs):
        cfg = AdaptiveConfig(**{"tol": 1e-8, "t_end": 2.0, **kwargs})
        with pytest.raises(InvalidParameter):
            integrate_adaptive(make_flow("crk4"), CUBIC.problem, cfg, 0.0, [1.0])

    @pytest.mark.parametrize("scheme", ["crk4", "cgrk2", "bs3", "dop5"])
    def test_monotone_and_lands(self, scheme):
        cfg = AdaptiveConfig(tol=1e-8, t_end=2.0, tau0=0.05)
        trace = integrate_adaptive(make_flow(scheme), CUBIC.problem, cfg, 0.0, [1.0])
        assert np.all(np.diff(trace.times) > 0)
        assert abs(trace.times[-1] - 2.0) <= cfg.tau_min
        assert abs(trace.states[-1, 0] - 1 / math.sqrt(5)) < 1e-5

    def test_deterministic(self):
        cfg = AdaptiveConfig(tol=1e-9, t_end=2.0, tau0=0.05)
        a = integrate_adaptive(make_flow("crk2"), CUBIC.problem, cfg, 0.0, [1.0])
        b = integrate_adaptive(make_flow("crk2"), CUBIC.problem, cfg, 0.0, [1.0])
        assert np.array_equal(a.states, b.states) and np.array_equal(a.taus, b.taus)

    def test_stall(self):
        # an unreachable tolerance drives tau down to tau_min and keeps it there
        cfg = AdaptiveConfig(tol=1e-30, t_end=2.0, tau0=0.1, tau_min=1e-4)
        with pytest.raises(StiffnessStall):
            integrate_adaptive(make_flow("crk1"), CUBIC.problem, cfg, 0.0, [1.0])


def lambert_trace(tol):
    spec = make_problem("lambert", {"delta": 0.01})
    cfg = AdaptiveConfig(tol=tol, t_end=spec.t_end, tau0=0.1)
    return integrate_adaptive(make_flow("crk4"), spec.problem, cfg, spec.t0, spec.y0)


@pytest.fixture(scope="module")
def lambert_tight():
    return lambert_trace(1e-10)


def test_lambert_step_profile(lambert_tight):
    taus, times = lambert_tight.taus, lambert_tight.times[1:]
    assert taus[1] > 0.4
    interior = slice(1, -1)
    k = np.argmin(taus[interior]) + 1
    assert 80 <= times[k] <= 120
    assert 2 <= np.mean(taus[times > 120][:-1]) <= 8


def test_lambert_tolerance_proportionality(lambert_tight):
    loose = lambert_trace(2e-10)
    # halving tol never makes the run's largest steps larger
    assert np.max(lambert_tight.taus) <= 5 * np.max(loose.taus)
    assert lambert_tight.accepted >= loose.accepted


@pytest.fixture(scope="module")
def runs():
    flow = BPLFlow(5)
    return {tol: integrate_residual_bpl(flow, CUBIC.problem, tol, 0.1, 0.0, [1.0], 2.0) for tol in (1e-4, 1e-6, 1e-8)}


class TestResidualBPL:
    def test_steps_shrink_with_tol(self, runs):
        means = [np.mean(runs[tol].taus[:-1]) for tol in (1e-4, 1e-6, 1e-8)]
        assert means[0] > means[1] > means[2]

    def test_several_residual_evaluations(self, runs):
        for trace in runs.values():
            assert trace.ok
            assert all(r.residual_evals >= 2 for r in trace.records[:-1])

    def test_accepted_residual_below_tol(self, runs):
        flow = BPLFlow(5)
        trace = runs[1e-6]
        for y, t, rec in zip(trace.states[:-1], trace.times[:-1], trace.records):
            assert flow.expansion(CUBIC.problem, t, y).residual(rec.tau) < 1e-6

    def test_lands(self, runs):
        for trace in runs.values():
            assert trace.times[-1] == 2.0

    def test_shrinks_from_oversized_start(self):
        trace = integrate_residual_bpl(BPLFlow(5), CUBIC.problem, 1e-8, 1.5, 0.0, [1.0], 0.5)
        assert trace.ok and trace.taus[0] < 1.5

    def test_bad_growth(self):
        with pytest.raises(InvalidParameter):
            integrate_residual_bpl(BPLFlow(5), CUBIC.problem, 1e-8, 0.1, 0.0, [1.0], 1.0, growth=1.0)


def test_undamped_oscillator_bpl():
    spec = make_problem("duffingVdP", {"r": 0, "g": 0, "c": 0, "a": 1, "b": 1, "t_end": 20})
    cfg = AdaptiveConfig(tol=1e-10, t_end=spec.t_end, tau0=0.01)
    trace = integrate_adaptive(make_flow("cbpl5"), spec.problem, cfg, spec.t0, spec.y0)
    taus = trace.taus[1:-1]
    # same order of magnitude as the [0.004, 0.02] band; exact values depend on unstated parameters
    assert 0.0004 <= np.min(taus) and np.max(taus) <= 0.2
    drift = first_integral_drift(trace, spec)
    half = trace.times.size // 2
    assert np.max(drift[half:]) <= 10 * max(np.max(drift[:half]), 1e-15)
