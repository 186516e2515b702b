"""
Outer reweighting loops.

`run_nr_irls` alternates a weighted least squares solve with the epsilon and
weight updates, starting from unit weights and eps = 1. `run_convexified`
adds the proximal term omega ||x - x^n||^2 to every inner solve and starts
with weights already adapted to x_start. `multistart_convexified` runs the
latter from the l2 critical points reached from several starts and keeps
the one with the smallest final lp residual. `solve_lp_direct` is the
baseline that minimizes f_eps in one scipy least-squares call.
"""
import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from main.config import EPS_HARD_FLOOR, EPS_INIT, MULTISTART_WORKERS, STALL_TOLERANCE, STALL_WINDOW
from main.core.exceptions import (
    AllStartsFailed,
    DimensionMismatch,
    InnerSolverError,
    InvalidConfiguration,
    IrlsError,
    NonFiniteEvaluation,
)
from main.core.functional import grad_f_eps, j_from_residual, lp_norm, optimal_weights, update_epsilon
from main.core.inner_solver import ProximalTerm, lm_solve
from main.core.options import IrlsConfig
from main.core.residual import IrlsState, ResidualMap, SolveReport, Termination
from main.core.rng import STREAM_STARTS, make_rng, sample_in_ball

logger = logging.getLogger(__name__)


class SolverKind(str, enum.Enum):
    """How restricted problems are solved: the reweighting loops or the smoothed direct baseline."""
    IRLS = "irls"
    DIRECT = "direct"


class StartSampler(str, enum.Enum):
    RANDOM_IN_BALL = "RandomInBall"
    USER_PROVIDED = "UserProvided"


@dataclass(frozen=True)
class MultistartPlan:
    """
    Where the l2 stage of a multistart run begins.

    RandomInBall draws `num_starts` points uniformly from the ball of
    `radius` (seeded by `seed`); UserProvided uses `start_points` as given.
    """
    num_starts: int = 1
    start_points: Tuple[Tuple[float, ...], ...] = ()
    start_sampler: StartSampler = StartSampler.RANDOM_IN_BALL
    radius: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.start_sampler == StartSampler.USER_PROVIDED:
            if not self.start_points:
                raise ValueError("UserProvided plan needs at least one start point")
            object.__setattr__(self, "num_starts", len(self.start_points))
        if self.num_starts < 1:
            raise ValueError(f"num_starts must be at least 1, got {self.num_starts}")
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")

    @classmethod
    def user_provided(cls, points: Sequence) -> "MultistartPlan":
        pts = tuple(tuple(np.atleast_1d(np.asarray(p, dtype=float)).tolist()) for p in points)
        return cls(start_points=pts, start_sampler=StartSampler.USER_PROVIDED)

    @classmethod
    def random_in_ball(cls, num_starts: int, radius: float, seed: int = 0) -> "MultistartPlan":
        return cls(num_starts=num_starts, radius=radius, seed=seed)

    def resolve(self, dim: int, rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
        """Concrete start points in R^dim; exactly `num_starts` of them."""
        if self.start_sampler == StartSampler.USER_PROVIDED:
            points = [np.asarray(p, dtype=float) for p in self.start_points]
            for p in points:
                if p.shape != (dim,):
                    raise DimensionMismatch(f"Start point of shape {p.shape} does not match dimension {dim}")
            return points
        rng = rng or make_rng(self.seed, STREAM_STARTS)
        return list(sample_in_ball(rng, self.num_starts, dim, self.radius))


def _snapshot(n: int, x: np.ndarray, w: np.ndarray, eps: float, r: np.ndarray, p: float,
              step_norm: float = float("nan")) -> IrlsState:
    return IrlsState(
        n=n,
        x=x,
        w=w,
        eps=float(eps),
        j_value=j_from_residual(r, w, eps, p),
        lp_residual=lp_norm(r, p),
        step_norm=step_norm,
    )


def _check_problem(map: ResidualMap, y, config: IrlsConfig) -> np.ndarray:
    if config.p >= 2.0:
        logger.warning("p = 2 is a degenerate configuration; weights stay at 1")
    return map.check_output(y)


def _evaluate_residual(map: ResidualMap, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = map.eval(x) - y
    if not np.all(np.isfinite(r)):
        raise NonFiniteEvaluation("Residual is not finite")
    return r


def _terminal_reason(eps: float, config: IrlsConfig) -> Optional[Termination]:
    if eps == 0.0:
        return Termination.EPS_ZERO
    if eps <= config.stop_eps or eps <= config.eps_hard_floor:
        return Termination.EPS_BELOW_FLOOR
    return None


def _is_stationary(map: ResidualMap, y: np.ndarray, x: np.ndarray, r: np.ndarray, eps: float,
                   config: IrlsConfig) -> bool:
    """||grad f_eps(x)|| <= stationarity_tol * (1 + f_eps(x))."""
    if config.stationarity_tol <= 0:
        return False
    f_value = float(np.sum((r * r + eps * eps) ** (0.5 * config.p)))
    gradient = grad_f_eps(map, x, y, eps, config.p)
    return float(np.linalg.norm(gradient)) <= config.stationarity_tol * (1.0 + f_value)


def _iterate(map: ResidualMap, y: np.ndarray, config: IrlsConfig, first: IrlsState,
             started: float, check_first: bool) -> SolveReport:
    p = config.p
    states = [first]
    x, w, eps = first.x, first.w, first.eps
    error = None
    termination = _terminal_reason(eps, config) if check_first else None
    omega_inner = config.omega / p
    stall = 0

    iterations = 0
    while termination is None:
        if iterations >= config.max_outer_iters:
            termination = Termination.MAX_ITERS
            break
        iterations += 1
        try:
            x_new = lm_solve(map, y, w, x, ProximalTerm(omega_inner, x), config.inner).x
            r = _evaluate_residual(map, x_new, y)
        except (InnerSolverError, NonFiniteEvaluation) as e:
            if len(states) == 1:
                raise
            logger.warning(f"Inner solve failed at outer iteration {states[-1].n + 1}: {e}")
            termination = Termination.INNER_SOLVER_FAILURE
            error = f"{type(e).__name__}: {e}"
            break

        eps_new = update_epsilon(r, eps, config.eps_tilde).next_eps
        w_new = optimal_weights(r, max(eps_new, config.eps_hard_floor), p)
        state = _snapshot(states[-1].n + 1, x_new, w_new, eps_new, r, p,
                          float(np.linalg.norm(x_new - x)))
        unchanged = eps_new == eps
        decrease = states[-1].j_value - state.j_value
        if unchanged and decrease < STALL_TOLERANCE * max(1.0, abs(state.j_value)):
            stall += 1
        else:
            stall = 0
        states.append(state)
        logger.debug(f"n={state.n} eps={eps_new:.3e} J={state.j_value:.12g}")
        x, w, eps = x_new, w_new, eps_new

        termination = _terminal_reason(eps, config)
        if termination is None and unchanged and _is_stationary(map, y, x, r, eps, config):
            termination = Termination.STATIONARY
        if termination is None and stall >= STALL_WINDOW:
            termination = Termination.STALLED

    last = states[-1]
    report = SolveReport(
        iterates=states,
        termination=termination,
        final_x=last.x,
        final_lp_residual=last.lp_residual,
        wall_time=time.perf_counter() - started,
        p=p,
        omega=config.omega,
        error=error,
    )
    logger.debug(f"Run finished: {report}")
    return report


def run_nr_irls(map: ResidualMap, y, config: IrlsConfig, x_start) -> SolveReport:
    """
    Plain reweighting loop from x_start with w = 1 and eps = 1.

    Raises:
        InvalidConfiguration: If config.omega is not zero.
    """
    if config.omega != 0:
        raise InvalidConfiguration("run_nr_irls requires omega = 0; use run_convexified")
    started = time.perf_counter()
    y = _check_problem(map, y, config)
    x = map.check_input(x_start).copy()
    r = _evaluate_residual(map, x, y)
    first = _snapshot(0, x, np.ones(map.dim_out), EPS_INIT, r, config.p)
    return _iterate(map, y, config, first, started, check_first=False)


def run_convexified(map: ResidualMap, y, config: IrlsConfig, x_start) -> SolveReport:
    """
    Proximal reweighting loop. x^1 = x_start and (eps_1, w^1) are computed
    from the residual at x_start before the first inner solve.
    """
    if not config.omega > 0:
        raise InvalidConfiguration("run_convexified requires omega > 0")
    started = time.perf_counter()
    y = _check_problem(map, y, config)
    x = map.check_input(x_start).copy()
    r = _evaluate_residual(map, x, y)
    eps = update_epsilon(r, EPS_INIT, config.eps_tilde).next_eps
    w = optimal_weights(r, max(eps, config.eps_hard_floor), config.p)
    first = _snapshot(1, x, w, eps, r, config.p)
    return _iterate(map, y, config, first, started, check_first=True)


def solve_from_l2_point(map: ResidualMap, y, config: IrlsConfig, start) -> SolveReport:
    """l2 stage from `start`, then the reweighting loop selected by config.omega."""
    l2_point = lm_solve(map, y, np.ones(map.dim_out), start, None, config.inner).x
    if config.omega > 0:
        return run_convexified(map, y, config, l2_point)
    return run_nr_irls(map, y, config, l2_point)


def multistart_convexified(map: ResidualMap, y, config: IrlsConfig, plan: MultistartPlan,
                           max_workers: Optional[int] = None,
                           rng: Optional[np.random.Generator] = None) -> Tuple[SolveReport, List[SolveReport]]:
    """
    Runs one branch per start point and keeps the smallest final lp residual.

    Branches execute on a thread pool; results are merged by start index and
    ties go to the lowest index.

    Returns:
        (best report, reports of every branch that finished, in start order)

    Raises:
        AllStartsFailed: If every branch raised.
    """
    starts = plan.resolve(map.dim_in, rng)
    workers = max(1, min(max_workers or MULTISTART_WORKERS, len(starts)))

    if workers == 1:
        outcomes = []
        for start in starts:
            try:
                outcomes.append(solve_from_l2_point(map, y, config, start))
            except IrlsError as e:
                outcomes.append(e)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(solve_from_l2_point, map, y, config, s) for s in starts]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except IrlsError as e:
                    outcomes.append(e)

    reports = []
    best = None
    for index, outcome in enumerate(outcomes):
        if isinstance(outcome, Exception):
            logger.warning(f"Start {index} failed: {type(outcome).__name__}: {outcome}")
            continue
        outcome.meta["start_index"] = index
        reports.append(outcome)
        if np.isfinite(outcome.final_lp_residual) and (
                best is None or outcome.final_lp_residual < best.final_lp_residual):
            best = outcome

    if not reports:
        raise AllStartsFailed(f"All {len(starts)} starts failed")
    if best is None:
        best = reports[0]
    return best, reports


def solve_lp_direct(map: ResidualMap, y, p: float, x_start, eps: float = EPS_HARD_FLOOR) -> SolveReport:
    """
    Baseline: minimizes f_eps directly with scipy's trust-region least squares
    on s_i = (r_i^2 + eps^2)^(p/4), so that sum s_i^2 = f_eps.
    """
    started = time.perf_counter()
    y = map.check_output(y)
    x0 = map.check_input(x_start).copy()

    def fun(x):
        r = map.eval(x) - y
        return (r * r + eps * eps) ** (0.25 * p)

    def jac(x):
        r = map.eval(x) - y
        scale = 0.5 * p * r * (r * r + eps * eps) ** (0.25 * p - 1.0)
        return scale[:, None] * map.jacobian(x)

    result = least_squares(fun, x0, jac=jac if map.has_jacobian else "2-point", method="trf")
    r = map.eval(result.x) - y
    state = _snapshot(result.nfev, result.x, optimal_weights(r, eps, p), eps, r, p)
    if result.success:
        termination = Termination.STATIONARY
    elif result.status == 0:
        termination = Termination.MAX_ITERS
    else:
        termination = Termination.INNER_SOLVER_FAILURE
    return SolveReport(
        iterates=[state],
        termination=termination,
        final_x=result.x,
        final_lp_residual=state.lp_residual,
        wall_time=time.perf_counter() - started,
        p=p,
        error=None if result.success else result.message,
        meta={"method": "direct"},
    )


def multistart_direct(map: ResidualMap, y, p: float, plan: MultistartPlan, eps: float = EPS_HARD_FLOOR,
                      rng: Optional[np.random.Generator] = None) -> Tuple[SolveReport, List[SolveReport]]:
    """`solve_lp_direct` from every start of `plan`; keeps the smallest final lp residual."""
    reports = []
    best = None
    for index, start in enumerate(plan.resolve(map.dim_in, rng)):
        report = solve_lp_direct(map, y, p, start, eps)
        report.meta["start_index"] = index
        reports.append(report)
        if np.isfinite(report.final_lp_residual) and (
                best is None or report.final_lp_residual < best.final_lp_residual):
            best = report
    return best or reports[0], reports
