"""Command-line entry point: ``complexcomp {converge,stability,integrate,compare}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .adaptive import AdaptiveConfig, integrate_adaptive, integrate_fixed, integrate_residual_bpl
from .bpl import BPLFlow
from .errors import ComplexCompError, IntegrationError
from .harness import (
    IntegrationFailed,
    make_flow,
    run_comparison,
    run_convergence_study,
    stability_grids,
    write_rows_csv,
    write_trace_csv,
)
from .problems import load_params, make_problem
from .stability import write_stability_csv

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_BAD_ARGS = 3

log = logging.getLogger("complexcomp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_ARGS, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{key}: not a number: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="complexcomp", description="Complex-composition ODE integrators and benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def problem_args(p):
        p.add_argument("--problem", required=True)
        p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE")
        p.add_argument("--config", help="flat 'problem.key = value' file")
        p.add_argument("--out", required=True)

    conv = sub.add_parser("converge", help="global error and ROC over a list of step sizes")
    conv.add_argument("--scheme", required=True)
    conv.add_argument("--composed", action="store_true")
    conv.add_argument("--taus", type=_floats, required=True)
    problem_args(conv)

    stab = sub.add_parser("stability", help="rasterise base and composed stability magnitudes")
    stab.add_argument("--scheme", required=True)
    stab.add_argument("--box", type=_floats, required=True, help="xmin,xmax,ymin,ymax")
    stab.add_argument("--nx", type=int, default=200)
    stab.add_argument("--ny", type=int, default=200)
    stab.add_argument("--out", required=True)

    integ = sub.add_parser("integrate", help="one run, written as a trace CSV")
    integ.add_argument("--scheme", required=True)
    integ.add_argument("--composed", action="store_true")
    mode = integ.add_mutually_exclusive_group(required=True)
    mode.add_argument("--tau", type=float)
    mode.add_argument("--adaptive", action="store_true")
    integ.add_argument("--tol", type=float, default=1e-8)
    integ.add_argument("--tau0", type=float, default=0.1)
    integ.add_argument("--growth", type=float, default=1.1, help="trial factor for residual-driven BPL")
    problem_args(integ)

    comp = sub.add_parser("compare", help="several schemes on the same grid")
    comp.add_argument("--schemes", required=True)
    cmode = comp.add_mutually_exclusive_group(required=True)
    cmode.add_argument("--taus", type=_floats)
    cmode.add_argument("--adaptive", action="store_true")
    comp.add_argument("--tol", type=float, default=1e-8)
    comp.add_argument("--tau0", type=float, default=0.1)
    problem_args(comp)
    return parser


def _load_spec(args):
    params = {}
    if args.config:
        prefix = args.problem.lower() + "."
        for key, value in load_params(args.config).items():
            if key.lower().startswith(prefix):
                params[key[len(prefix):]] = value
            elif "." not in key:
                params[key] = value
    params.update(dict(args.param))
    return make_problem(args.problem, params)


def _cmd_converge(args) -> int:
    spec = _load_spec(args)
    report = run_convergence_study(args.scheme, spec, args.taus, composed=args.composed)
    roc = [float("nan"), *report.roc]
    rows = zip(report.taus, report.global_errors, roc, report.rhs_evals, report.wall_times)
    write_rows_csv(args.out, ["tau", "global_error", "roc", "rhs_evals", "wall_time"], rows)
    for tau, err, r in zip(report.taus, report.global_errors, roc):
        print(f"{report.scheme:>10}  tau={tau:<12.6g} error={err:.4e}  roc={r:.3f}")
    return EXIT_OK


def _cmd_stability(args) -> int:
    if len(args.box) != 4:
        raise argparse.ArgumentTypeError("--box needs four numbers")
    base, composed = stability_grids(args.scheme, args.box, args.nx, args.ny)
    write_stability_csv(args.out, base, composed)
    return EXIT_OK


def _cmd_integrate(args) -> int:
    spec = _load_spec(args)
    flow = make_flow(args.scheme, args.composed)
    if args.adaptive and isinstance(flow, BPLFlow):
        trace = integrate_residual_bpl(flow, spec.problem, args.tol, args.tau0, spec.t0, spec.y0, spec.t_end, args.growth)
    elif args.adaptive:
        cfg = AdaptiveConfig(tol=args.tol, t_end=spec.t_end, tau0=args.tau0)
        trace = integrate_adaptive(flow, spec.problem, cfg, spec.t0, spec.y0)
    else:
        trace = integrate_fixed(flow, spec.problem, spec.t0, spec.y0, args.tau, spec.t_end)
    # reference-only problems leave exact_err empty; the reference run is minutes long
    write_trace_csv(args.out, trace, spec.exact)
    print(f"{trace.scheme}: {trace.accepted} steps, {trace.total_rhs_evals} rhs evaluations, {trace.wall_time:.3f}s")
    if not trace.ok:
        log.error("integration stopped: %s", trace.failure)
        return EXIT_FAILED
    return EXIT_OK


def _cmd_compare(args) -> int:
    spec = _load_spec(args)
    schemes = [s for s in args.schemes.split(",") if s.strip()]
    cfg = AdaptiveConfig(tol=args.tol, t_end=spec.t_end, tau0=args.tau0) if args.adaptive else None
    rows = run_comparison(schemes, spec, taus=args.taus, adaptive=cfg)
    header = ["scheme", "tau", "global_error", "ratio", "rhs_evals", "steps", "wall_time"]
    write_rows_csv(args.out, header, [[getattr(r, k) for k in header] for r in rows])
    for r in rows:
        print(f"{r.scheme:>10}  tau={r.tau!s:<12} error={r.global_error:.4e}  ratio={r.ratio:.3f}  evals={r.rhs_evals}")
    return EXIT_OK


_COMMANDS = {
    "converge": _cmd_converge,
    "stability": _cmd_stability,
    "integrate": _cmd_integrate,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (IntegrationFailed, IntegrationError) as exc:
        log.error("integration failed: %s", exc)
        return EXIT_FAILED
    except (ComplexCompError, argparse.ArgumentTypeError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_ARGS
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
