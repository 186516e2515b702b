"""
Command-line front end: `solve`, `experiment` and `diagnose`.

Exit codes: 0 on success, 1 when a solver fails, 2 for unreadable or
invalid input (problem files, config files, flags).
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from main.config import DATABASE_URL
from main.core.data_manager import DataManager
from main.core.database import make_session
from main.core.diagnostics import DiagnosticsEngine
from main.core.exceptions import IrlsError, ParseError
from main.core.experiment import load_experiment_config, run_experiment, write_experiment
from main.core.irls import (
    MultistartPlan,
    multistart_convexified,
    run_convexified,
    run_nr_irls,
    solve_lp_direct,
)
from main.core.problems import ProblemFamily, ProblemInstance
from main.core.reporting import ReportGenerator
from main.core.residual import SolveReport
from main.core.rng import STREAM_SCORING, make_rng
from main.core.settings_manager import settings_manager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_BAD_INPUT = 2


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise ValueError(f"expected comma-separated numbers, got '{text}'")


def _format_vector(x: np.ndarray) -> str:
    return "[" + ", ".join(f"{v:.10g}" for v in np.atleast_1d(x)) + "]"


def _add_solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("problem", help="Problem file")
    parser.add_argument("--p", type=float, default=None, help="Exponent in [1, 2]")
    parser.add_argument("--omega", type=float, default=None, help="Proximal weight; > 0 selects the convexified loop")
    parser.add_argument("--eps-tilde", type=float, default=None)
    parser.add_argument("--stop-eps", type=float, default=None)
    parser.add_argument("--max-iters", type=int, default=None, help="Maximal outer iterations")
    parser.add_argument("--x0", default=None, help="Start point, comma-separated (default: origin)")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lp-irls",
                                     description="Reweighted lp-residual solvers for nonlinear equations")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Solve one problem file")
    _add_solver_flags(solve)
    solve.add_argument("--starts", type=int, default=1, help="Number of random starts (multistart if > 1)")
    solve.add_argument("--radius", type=float, default=1.0, help="Start-ball radius for --starts")
    solve.add_argument("--direct", action="store_true", help="Use the smoothed least-squares baseline")
    solve.add_argument("--out", default=None, help="Trace CSV path")

    experiment = sub.add_parser("experiment", help="Run a seeded experiment grid")
    experiment.add_argument("config", help="Experiment config file (key=value)")
    experiment.add_argument("--out", default=None, help="Output directory (overrides output_path)")
    experiment.add_argument("--scale", choices=["desk", "paper"], default=None)
    experiment.add_argument("--seed", type=int, default=None, help="Overrides base_seed")
    experiment.add_argument("--workers", type=int, default=None)
    experiment.add_argument("--db", nargs="?", const=DATABASE_URL, default=None,
                            help="Also store records in this database")

    diagnose = sub.add_parser("diagnose", help="Run a solve and report the convergence diagnostics")
    _add_solver_flags(diagnose)
    diagnose.add_argument("--samples", type=int, default=64, help="Samples for the BCC estimate")
    diagnose.add_argument("--radius", type=float, default=1.0, help="Sampling radius around x_star")
    diagnose.add_argument("--mu-nu", action="store_true", help="Report the decay constants mu and nu")
    diagnose.add_argument("--c-hat", type=float, default=None)
    diagnose.add_argument("--beta", type=float, default=None, help="Default: the estimated beta_hat")
    diagnose.add_argument("--m", type=int, default=None, help="Default: the number of residual components")
    diagnose.add_argument("--html", default=None, help="Also write an HTML report")
    return parser


def _solve(instance: ProblemInstance, args) -> SolveReport:
    map = instance.restricted_map()
    config = settings_manager.irls_config(p=args.p, omega=args.omega, eps_tilde=args.eps_tilde,
                                          stop_eps=args.stop_eps, max_outer_iters=args.max_iters)
    x0 = _parse_vector(args.x0) if args.x0 is not None else np.zeros(map.dim_in)

    if getattr(args, "direct", False):
        return solve_lp_direct(map, instance.y, config.p, x0)
    if getattr(args, "starts", 1) > 1:
        plan = MultistartPlan.random_in_ball(args.starts, args.radius, args.seed)
        best, _ = multistart_convexified(map, instance.y, config, plan,
                                         max_workers=settings_manager.get("multistart_workers"))
        return best
    if config.omega > 0:
        return run_convexified(map, instance.y, config, x0)
    return run_nr_irls(map, instance.y, config, x0)


def cmd_solve(args) -> int:
    instance = DataManager().read_problem_file(args.problem)
    report = _solve(instance, args)
    final_x = report.final_x
    if instance.support is not None:
        final_x = instance.restricted_map().pad(final_x)
    print(f"final_x: {_format_vector(final_x)}")
    print(f"final_lp_residual: {report.final_lp_residual:.10g}")
    print(f"termination: {report.termination.value}")
    print(f"outer_iters: {report.outer_iters}")
    if report.error:
        print(f"error: {report.error}")
    if args.out:
        outcome = DataManager().export_trace_csv(report, args.out)
        if not outcome["success"]:
            raise OSError(outcome["message"])
        print(f"trace: {args.out}")
    return EXIT_OK


def _diagnostic_samples(instance: ProblemInstance, x_star: np.ndarray, count: int, radius: float, seed: int):
    rng = make_rng(seed, STREAM_SCORING)
    if instance.meta.get("family") == ProblemFamily.SIMPLE_1D.value:
        candidates = rng.uniform(0.0, 1.0, size=(count, 1))
    else:
        directions = rng.standard_normal((count, x_star.size))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        candidates = x_star + radius * rng.uniform(0.0, 1.0, size=(count, 1)) * directions
    keep = np.linalg.norm(candidates - x_star, axis=1) > 1e-12
    return candidates[keep]


def cmd_diagnose(args) -> int:
    instance = DataManager().read_problem_file(args.problem)
    map = instance.restricted_map()
    report = _solve(instance, args)
    engine = DiagnosticsEngine(seed=args.seed)

    x_star = instance.restricted_x_star()
    if x_star is None:
        x_star = report.final_x
    samples = _diagnostic_samples(instance, np.asarray(x_star, dtype=float), args.samples,
                                  args.radius, args.seed)
    results = engine.summarize(report, map, instance.y, x_star, samples)
    results["run"] = {
        "termination": report.termination.value,
        "outer_iters": report.outer_iters,
        "final_lp_residual": report.final_lp_residual,
        "final_eps": report.final_eps,
    }

    if args.mu_nu:
        if args.c_hat is None:
            raise ValueError("--mu-nu needs --c-hat")
        beta = args.beta
        if beta is None:
            if "bcc" not in results:
                raise ValueError("--mu-nu needs --beta when no BCC estimate is available")
            beta = results["bcc"].beta_hat
        m = args.m if args.m is not None else map.dim_out
        results["mu_nu"] = engine.compute_mu_nu(report.p, m, beta, args.c_hat)

    print(ReportGenerator.format_text_report(results))
    if args.html:
        if not ReportGenerator.generate_html_report(results, args.html, args.problem):
            raise OSError(f"Could not write {args.html}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    overrides = {"scale": args.scale, "base_seed": args.seed}
    config = load_experiment_config(args.config, overrides)
    result = run_experiment(config, workers=args.workers)
    paths = write_experiment(result, args.out)
    print(f"records: {paths['records']}")
    print(f"summary: {paths['summary']}")

    if args.db:
        with open(args.config, "r") as f:
            config_text = f.read()
        run_id = DataManager(make_session(args.db)).save_experiment(
            config.family.value, config.base_seed, result.records, config_text)
        if run_id is None:
            logger.warning(f"Records were not stored in {args.db}")
        else:
            print(f"stored as run {run_id}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "experiment": cmd_experiment, "diagnose": cmd_diagnose}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except IrlsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
