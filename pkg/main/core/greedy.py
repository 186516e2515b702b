"""
Greedy sparse recovery driven by the reweighting solvers.

Each step scores the indices outside the current support by the gradient of
the lp residual at the current estimate, solves the restricted problem for
the best candidate (pruning the weakest index first once the support is
full) and keeps the result only if the residual drops.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from main.config import (
    GREEDY_BUDGET_FACTOR,
    GREEDY_FALLBACK_CANDIDATES,
    GREEDY_RESIDUAL_TOL,
    SUCCESS_THRESHOLD,
)
from main.core.exceptions import InvalidDimensions, IrlsError
from main.core.functional import grad_f_eps, lp_norm
from main.core.irls import MultistartPlan, SolverKind, multistart_convexified, multistart_direct
from main.core.options import IrlsConfig
from main.core.problems import restrict_to_support
from main.core.residual import ResidualMap
from main.core.rng import STREAM_STARTS, make_rng

logger = logging.getLogger(__name__)


@dataclass
class GreedyReport:
    support_trace: List[List[int]] = field(default_factory=list)
    estimate: Optional[np.ndarray] = None
    success: bool = False
    rel_error: float = float("nan")
    steps_used: int = 0
    per_step_residuals: List[float] = field(default_factory=list)
    outer_iters: int = 0
    final_eps: float = float("nan")

    @property
    def support(self) -> List[int]:
        return self.support_trace[-1] if self.support_trace else []


def relative_error(estimate: np.ndarray, x_star: np.ndarray, sign_symmetric: bool = False) -> float:
    """||estimate - x*|| / ||x*||, up to a global sign when the map cannot see it."""
    scale = float(np.linalg.norm(x_star))
    error = float(np.linalg.norm(estimate - x_star))
    if sign_symmetric:
        error = min(error, float(np.linalg.norm(estimate + x_star)))
    return error / scale if scale > 0 else error


def _coordinate_scores(map: ResidualMap, y: np.ndarray, estimate: np.ndarray, candidates: List[int],
                       p: float, radius: float) -> np.ndarray:
    """Best lp-residual decrease along each coordinate within [-radius, radius]."""
    base = lp_norm(map.eval(estimate) - y, p)
    scores = np.zeros(len(candidates))
    for position, j in enumerate(candidates):
        def along(t, j=j):
            trial = estimate.copy()
            trial[j] += t
            return lp_norm(map.eval(trial) - y, p)

        best = base
        for bounds in ((-radius, 0.0), (0.0, radius)):
            result = minimize_scalar(along, bounds=bounds, method="bounded")
            best = min(best, float(result.fun), along(bounds[0]), along(bounds[1]))
        scores[position] = base - best
    return scores


def _rank_candidates(map, y, estimate, candidates, config, radius) -> List[int]:
    gradient = grad_f_eps(map, estimate, y, config.eps_hard_floor, config.p)
    scores = np.abs(gradient[candidates])
    residual = lp_norm(map.eval(estimate) - y, config.p)
    if scores.size and scores.max() <= 1e-12 * (1.0 + residual):
        logger.debug("Gradient scores vanish; using coordinate line searches")
        scores = _coordinate_scores(map, y, estimate, candidates, config.p, radius)
    order = np.lexsort((np.asarray(candidates), -scores))
    return [candidates[i] for i in order]


def greedy_sparse_recovery(map: ResidualMap, y, K: int, config: IrlsConfig, plan: MultistartPlan,
                           rng_seed: int = 0, x_star=None,
                           threshold: float = SUCCESS_THRESHOLD,
                           residual_tol: float = GREEDY_RESIDUAL_TOL,
                           solver: SolverKind = SolverKind.IRLS) -> GreedyReport:
    """
    Recovers a vector with at most K nonzeros from y = A(x).

    Args:
        map: Map on R^N.
        y: Measurements.
        K: Maximal sparsity; the step budget is 3K.
        config: Solver configuration (omega = 0 selects the plain loop).
        plan: Start template for the restricted solves (sampled per support size).
        rng_seed: Seed of the start-point stream.
        x_star: Ground truth, used for rel_error and success only.
        threshold: Success threshold on rel_error.
        residual_tol: Stop once the lp residual falls below this value times (1 + ||y||_p).
        solver: IRLS runs the reweighting loops on each support; DIRECT the smoothed
            least-squares baseline from the same starts.

    Returns:
        GreedyReport.
    """
    N = map.dim_in
    if not 1 <= K <= N:
        raise InvalidDimensions(f"Expected 1 <= K <= N, got K={K}, N={N}")
    y = map.check_output(y)
    rng = make_rng(rng_seed, STREAM_STARTS)
    radius = plan.radius if plan.radius > 0 else 1.0

    support: List[int] = []
    estimate = np.zeros(N)
    current = lp_norm(map.eval(estimate) - y, config.p)
    stop_level = residual_tol * (1.0 + lp_norm(y, config.p))
    rejected = set()
    report = GreedyReport()

    for _ in range(GREEDY_BUDGET_FACTOR * K):
        if current <= stop_level:
            break
        candidates = [j for j in range(N) if j not in support and j not in rejected]
        if not candidates:
            candidates = [j for j in range(N) if j not in support]
            rejected.clear()
        if not candidates:
            break
        report.steps_used += 1
        ranked = _rank_candidates(map, y, estimate, candidates, config, radius)

        accepted = False
        for j in ranked[:GREEDY_FALLBACK_CANDIDATES]:
            trial = list(support)
            if len(trial) == K:
                weakest = min(trial, key=lambda i: (abs(estimate[i]), i))
                trial.remove(weakest)
            trial = sorted(trial + [j])
            try:
                restricted = restrict_to_support(map, trial)
                if solver == SolverKind.DIRECT:
                    best, _ = multistart_direct(restricted, y, config.p, plan, config.eps_hard_floor, rng=rng)
                else:
                    best, _ = multistart_convexified(restricted, y, config, plan, max_workers=1, rng=rng)
            except IrlsError as e:
                logger.warning(f"Candidate {j} failed: {type(e).__name__}: {e}")
                rejected.add(j)
                continue
            if best.final_lp_residual < current - 1e-12 * (1.0 + current):
                support = trial
                estimate = np.zeros(N)
                estimate[trial] = best.final_x
                current = best.final_lp_residual
                report.outer_iters = best.outer_iters
                report.final_eps = best.final_eps
                rejected.clear()
                accepted = True
                break
            rejected.add(j)

        if not accepted:
            logger.debug(f"No candidate improved the residual at step {report.steps_used}")
        report.support_trace.append(list(support))
        report.per_step_residuals.append(current)

    report.estimate = estimate
    if x_star is not None:
        report.rel_error = relative_error(estimate, np.asarray(x_star, dtype=float), map.sign_symmetric)
        report.success = bool(report.rel_error <= threshold)
    logger.info(f"Greedy finished after {report.steps_used} steps, support {support}, "
                f"residual {current:.6g}")
    return report
