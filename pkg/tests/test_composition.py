import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from complexcomp.composition import (
    ComposedFlow,
    CompositionCoefficients,
    composed_step,
    error_constant,
    gamma_coefficients,
)
from complexcomp.errors import InvalidOrder
from complexcomp.flows import OdeProblem, RungeKuttaFlow, make_tableau
from complexcomp.harness import fixed_grid, local_error_profile, make_flow, run_convergence_study
from complexcomp.problems import make_problem

CUBIC_SPEC = make_problem("cubic")
CUBIC = CUBIC_SPEC.problem
BASES = ["rk1", "rk2", "rk4", "grk2", "lobattoIIIA3"]


def rk(name):
    return RungeKuttaFlow(make_tableau(name))


class TestCoefficients:
    def test_first_order(self):
        g1, g2 = gamma_coefficients(1)
        assert abs(g1 - (0.5 + 0.5j)) <= 1e-15
        assert g2 == g1.conjugate()

    def test_second_order(self):
        g1, _ = gamma_coefficients(2)
        assert abs(g1 - complex(0.5, math.sqrt(3) / 6)) <= 1e-15
        assert g1.imag == pytest.approx(0.2886751346, abs=1e-10)

    def test_fourth_order(self):
        g1, _ = gamma_coefficients(4)
        assert g1.imag == pytest.approx(0.1624598481, abs=1e-10)
        # the commonly printed 0.3249196962 is tan(pi/10), twice this value
        assert 2 * g1.imag == pytest.approx(math.tan(math.pi / 10), abs=1e-15)
        assert CompositionCoefficients.for_order(4).c_hat1 == pytest.approx(0.3249196962, abs=1e-10)

    @pytest.mark.parametrize("p", range(1, 11))
    def test_identities(self, p):
        g1, g2 = gamma_coefficients(p)
        assert abs(g1 + g2 - 1) <= 1e-14
        assert abs(g1 ** (p + 1) + g2 ** (p + 1)) <= 1e-13
        assert abs((g1 ** (p + 2) + g2 ** (p + 2)).imag) <= 1e-13
        assert g2 == g1.conjugate()

    @pytest.mark.parametrize("p", [0, -1, 1.5])
    def test_invalid(self, p):
        with pytest.raises(InvalidOrder):
            gamma_coefficients(p)


class TestErrorConstant:
    def test_first_order(self):
        g1, g2 = gamma_coefficients(1)
        assert abs(g2 * g1**2 - (1 + 1j) / 4) <= 1e-15
        assert abs(g1 * g2**2 - (1 - 1j) / 4) <= 1e-15
        c1, c2, c = error_constant(1, g1, g2)
        assert c1 == pytest.approx(1.0, abs=1e-14)
        assert c2 == pytest.approx(5.0, abs=1e-14)
        assert c == pytest.approx(5.0, abs=1e-14)

    @pytest.mark.parametrize("p", range(1, 11))
    def test_swap_invariance(self, p):
        g1, g2 = gamma_coefficients(p)
        assert error_constant(p, g2, g1)[2] == pytest.approx(error_constant(p, g1, g2)[2], rel=1e-13)

    @pytest.mark.parametrize("p", range(1, 11))
    def test_positive(self, p):
        c = CompositionCoefficients.for_order(p)
        assert c.c_hat > 0 and c.c_hat == max(c.c_hat1, c.c_hat2)


class TestComposedStep:
    def test_euler_linear(self):
        lin = OdeProblem(1, lambda t, y: -1.0 * y)
        out = composed_step(rk("rk1"), lin, 0.0, [1.0], 0.1)
        # (1 + g1 z)(1 + g2 z) = 1 + z + z^2/2 because g1 g2 = 1/2
        assert out.approx[0] == pytest.approx(0.905, abs=1e-15)
        assert abs(out.raw[0].imag) <= 1e-17
        assert out.err_est <= 1e-16

    def test_euler_closed_form(self):
        tau, y, t = 0.1, 1.0, 0.0
        f = lambda t, y: -(y**3)
        g1 = 0.5 + 0.5j
        fy = f(t, y)
        XY = f(t + g1 * tau, y + g1 * tau * fy)
        X, Y = XY.real, XY.imag
        out = composed_step(rk("rk1"), CUBIC, t, [y], tau)
        assert out.approx[0] == pytest.approx(y + tau / 2 * (fy + X + Y), abs=1e-15)
        assert out.raw[0].imag == pytest.approx(tau / 2 * (fy + Y - X), abs=1e-15)
        assert out.err_est == pytest.approx(5 * abs(tau / 2 * (fy + Y - X)), rel=1e-14)

    def test_output_invariants(self):
        out = ComposedFlow(rk("rk4")).step(CUBIC, 0.0, np.array([1.0]), 0.3)
        assert np.array_equal(out.approx, out.raw.real)
        c_hat = CompositionCoefficients.for_order(4).c_hat
        assert out.err_est == pytest.approx(c_hat * np.linalg.norm(out.raw.imag), rel=1e-15)

    def test_eval_count_doubles(self):
        out = ComposedFlow(rk("rk4")).step(CUBIC, 0.0, np.array([1.0]), 0.1)
        assert out.rhs_evals == 8

    def test_flow_metadata(self):
        flow = ComposedFlow(rk("rk2"))
        assert flow.name == "crk2"
        assert flow.order == 3
        assert flow.estimator_order == 2

    @pytest.mark.parametrize("name", BASES)
    def test_small_step_limit(self, name):
        out = composed_step(rk(name), CUBIC, 0.0, [1.0], 1e-6)
        assert abs(out.approx[0] - 1.0) <= 2e-6
        assert out.err_est <= 1e-12

    @pytest.mark.parametrize("name", BASES)
    def test_estimator_slope(self, name):
        p = make_tableau(name).order
        taus = np.array([0.02, 0.01, 0.005])
        est = [composed_step(rk(name), CUBIC, 0.0, [1.0], h).err_est for h in taus]
        slope = np.polyfit(np.log(taus), np.log(est), 1)[0]
        assert abs(slope - (p + 2)) <= 0.3

    @pytest.mark.parametrize(
        "name,tau",
        [
            ("rk1", 0.01),
            ("rk2", 0.01),
            # fourth-order local errors at tau=0.01 sit at roundoff
            ("rk4", 0.1),
            pytest.param("grk2", 0.2, marks=pytest.mark.xfail(strict=True, reason="symmetric base: estimate is one order pessimistic")),
            pytest.param("lobattoIIIA3", 0.2, marks=pytest.mark.xfail(strict=True, reason="symmetric base: estimate is one order pessimistic")),
        ],
    )
    def test_estimate_within_factor_ten(self, name, tau):
        times = fixed_grid(0.0, 2.0, tau)
        profile = local_error_profile(make_flow(name, composed=True), CUBIC_SPEC, times)
        assert np.all(profile.local_errors > 1e-14)
        ratio = profile.estimates / profile.local_errors
        assert np.all((ratio >= 0.1) & (ratio <= 10))

    @pytest.mark.parametrize("name", ["grk2", "lobattoIIIA3"])
    def test_symmetric_base_gains_two_orders(self, name):
        # the real part's tau^(p+2) term cancels too, so the local error falls
        # one order faster than the imaginary part
        flow = make_flow(name, composed=True)
        taus = [0.1, 0.05]
        prof = [local_error_profile(flow, CUBIC_SPEC, np.array([0.0, h])) for h in taus]
        err_slope = math.log(prof[0].local_errors[0] / prof[1].local_errors[0]) / math.log(2)
        est_slope = math.log(prof[0].estimates[0] / prof[1].estimates[0]) / math.log(2)
        assert err_slope > 6.2 and est_slope < 5.7


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(BASES), y=st.floats(0.2, 2.0), tau=st.floats(0.01, 0.5))
def test_conjugate_swap(name, y, tau):
    coeffs = CompositionCoefficients.for_order(make_tableau(name).order)
    a = composed_step(rk(name), CUBIC, 0.0, [y], tau, coeffs).raw
    b = composed_step(rk(name), CUBIC, 0.0, [y], tau, coeffs.swapped()).raw
    assert np.max(np.abs(a - np.conj(b))) <= 1e-12


@pytest.mark.parametrize("name", BASES)
def test_order_gain(name):
    p = make_tableau(name).order
    # 0.005 pushes the implicit compositions into roundoff
    report = run_convergence_study(name, CUBIC_SPEC, [0.04, 0.02, 0.01], composed=True)
    assert np.all(report.roc >= p + 1 - 0.2)
