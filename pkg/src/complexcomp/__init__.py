"""Complex-conjugate double composition of one-step ODE integrators.

The composed step returns a complex state whose real part gains one order of
accuracy and whose imaginary part, scaled by a constant, estimates the local
error. Base integrators are Runge-Kutta tableaux and a Borel-Pade-Laplace
series integrator.
"""

from .adaptive import AdaptiveConfig, IntegrationTrace, integrate_adaptive, integrate_fixed, integrate_residual_bpl
from .bpl import BPLFlow, gauss_laguerre, pade_approximant, taylor_coefficients
from .composition import CompositionCoefficients, ComposedFlow, composed_step, error_constant, gamma_coefficients
from .flows import ButcherTableau, EmbeddedFlow, OdeProblem, RungeKuttaFlow, make_tableau, rk_step
from .harness import global_error, global_ratio, make_flow, roc_sequence, run_comparison, run_convergence_study
from .problems import lambertw, make_problem
from .stability import composed_stability_value, real_axis_crossing, scan_region, stability_value

__version__ = "0.1.0"
