import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import linalg, stats

from main.core.exceptions import (
    DegeneratePair,
    DegenerateSample,
    NonFiniteEvaluation,
    NonPositiveAlpha,
    NonPositiveCHat,
    NonPositiveEps,
    TraceTooShort,
)
from main.core.functional import (
    eval_f_eps,
    grad_f_eps,
    j_from_residual,
    lp_norm,
    optimal_weights,
    weighted_sq_residual,
)
from main.core.residual import ResidualMap, SolveReport, validate_weights
from main.core.rng import make_rng, sample_in_ball

# Setup logging
logger = logging.getLogger(__name__)

_TINY_STEP = 1e-14


@dataclass(frozen=True)
class BccEstimate:
    alpha_hat: float
    beta_hat: float
    num_samples: int
    p: float


@dataclass(frozen=True)
class DecayConstants:
    mu: float
    nu: float
    c_hat: float
    beta: float
    m: int
    p: float

    @property
    def contraction(self) -> bool:
        return self.mu < 1.0


@dataclass(frozen=True)
class DecayFit:
    mu_empirical: Optional[float]
    residual_plateau: float
    no_decay: bool
    points_used: int = 0


def simple_1d_bcc_bounds(p: float):
    """Closed-form (alpha, beta) for x -> (x, x^2) on [0, 1]."""
    return 1.0, (1.0 + 2.0 ** p) ** (1.0 / p)


def finite_difference_hessian(objective: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Symmetrized central-difference Hessian."""
    k = x.size
    hess = np.empty((k, k))
    f0 = objective(x)
    for i in range(k):
        e_i = np.zeros(k)
        e_i[i] = h
        hess[i, i] = (objective(x + e_i) - 2.0 * f0 + objective(x - e_i)) / (h * h)
        for j in range(i + 1, k):
            e_j = np.zeros(k)
            e_j[j] = h
            value = (objective(x + e_i + e_j) - objective(x + e_i - e_j)
                     - objective(x - e_i + e_j) + objective(x - e_i - e_j)) / (4.0 * h * h)
            hess[i, j] = hess[j, i] = value
    if not np.all(np.isfinite(hess)):
        raise NonFiniteEvaluation("Objective is not finite near the evaluation point")
    return 0.5 * (hess + hess.T)


def fit_decay_rates(errors: Sequence[float]) -> DecayFit:
    """
    Fits E^n - E_inf ~ c mu^n on the longest strictly decreasing suffix.

    E_inf comes from Aitken's delta-squared on the last three values (clamped
    to [0, min E]); the slope of log(E^n - E_inf) is fitted with linregress.
    """
    e = np.asarray(errors, dtype=float)
    if e.size < 4:
        raise TraceTooShort(f"Need at least 4 error values, got {e.size}")

    start = e.size - 1
    while start > 0 and e[start] < e[start - 1]:
        start -= 1
    tail = e[start:]
    if tail.size < 3:
        return DecayFit(mu_empirical=None, residual_plateau=float(e[-1]), no_decay=True)

    d1 = tail[-1] - tail[-2]
    d2 = tail[-2] - tail[-3]
    denominator = d1 - d2
    plateau = tail[-1] - d1 * d1 / denominator if denominator != 0 else 0.0
    if not np.isfinite(plateau) or plateau < 0 or plateau > tail[-1]:
        plateau = 0.0

    excess = tail - plateau
    keep = excess > 1e-12 * max(excess[0], np.finfo(float).tiny)
    n = np.arange(start, e.size)[keep]
    if n.size < 2:
        return DecayFit(mu_empirical=None, residual_plateau=float(plateau), no_decay=True)
    try:
        slope, _, _, _, _ = stats.linregress(n, np.log(excess[keep]))
    except ValueError as e:
        logger.warning(f"Decay fit failed: {e}")
        return DecayFit(mu_empirical=None, residual_plateau=float(plateau), no_decay=True)
    return DecayFit(mu_empirical=float(np.exp(slope)), residual_plateau=float(plateau),
                    no_decay=False, points_used=int(n.size))


class DiagnosticsEngine:
    """
    Empirical checks of the structural conditions behind the convergence
    guarantees: coercivity bounds, strong convexity, per-step descent and
    error decay.
    """
    def __init__(self, seed: int = 0):
        self.seed = seed

    def estimate_bcc(self, map: ResidualMap, x_star, samples: Iterable, p: float) -> BccEstimate:
        """
        Ratios ||A(x*) - A(z)||_p / ||x* - z||_2 over the samples.

        Returns:
            BccEstimate with their minimum and maximum.
        """
        x_star = map.check_input(x_star)
        a_star = map.eval(x_star)
        ratios = []
        for z in samples:
            z = map.check_input(z)
            distance = float(np.linalg.norm(x_star - z))
            if distance < 1e-14:
                raise DegenerateSample(f"Sample {z} coincides with x_star")
            ratios.append(lp_norm(a_star - map.eval(z), p) / distance)
        if not ratios:
            raise DegenerateSample("No samples supplied")
        return BccEstimate(alpha_hat=min(ratios), beta_hat=max(ratios), num_samples=len(ratios), p=p)

    def compute_R_star_bound(self, j0: float, alpha: float, lp_residual_at_xstar: float,
                             xstar_norm: float, p: float) -> float:
        if not alpha > 0:
            raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
        return j0 ** (1.0 / p) / alpha + lp_residual_at_xstar / alpha + xstar_norm

    def compute_R_hat(self, j0: float, alpha: float, lp_residual_at_zero: float, p: float) -> float:
        if not alpha > 0:
            raise NonPositiveAlpha(f"alpha must be positive, got {alpha}")
        return (j0 ** (1.0 / p) + 3.0 * lp_residual_at_zero) / alpha

    def estimate_strong_convexity(self, objective: Callable[[np.ndarray], float], x_center,
                               radius: float, num_points: int) -> float:
        """
        Smallest Hessian eigenvalue over the center and `num_points` random
        points of the ball; negative values flag nonconvexity.
        """
        x_center = np.atleast_1d(np.asarray(x_center, dtype=float))
        h = 1e-5 * radius
        rng = make_rng(self.seed)
        points = [x_center] + [x_center + d for d in sample_in_ball(rng, num_points, x_center.size, radius)]
        smallest = np.inf
        for point in points:
            hess = finite_difference_hessian(objective, point, h)
            smallest = min(smallest, float(linalg.eigvalsh(hess)[0]))
        return smallest

    def check_uscc1_on_trace(self, report: SolveReport, map: ResidualMap, y) -> List[float]:
        """
        (J(x^n, w^n, eps_n) - J(x^{n+1}, w^n, eps_n)) / ||x^n - x^{n+1}||^2 per step.
        Steps shorter than 1e-14 are skipped.
        """
        states = report.iterates
        if len(states) < 2:
            raise TraceTooShort("USCC-1 check needs at least two iterates")
        y = map.check_output(y)
        ratios = []
        for current, following in zip(states[:-1], states[1:]):
            step = float(np.linalg.norm(current.x - following.x))
            if step < _TINY_STEP:
                continue
            r_next = map.eval(following.x) - y
            j_next = j_from_residual(r_next, current.w, current.eps, report.p)
            ratios.append((current.j_value - j_next) / (step * step))
        return ratios

    def check_lipcond(self, map: ResidualMap, y, w, x_a, x_b, t_grid: Iterable[float]) -> float:
        """
        Smallest L with |t (G(x_t) - G(x_a)) + (1-t)(G(x_t) - G(x_b))| <= L t(1-t) ||x_a - x_b||^2
        on the grid, where G = ||A(.) - y||^2_w and x_t = t x_a + (1-t) x_b.
        """
        x_a = map.check_input(x_a)
        x_b = map.check_input(x_b)
        w = validate_weights(w, map.dim_out)
        distance_sq = float(np.dot(x_a - x_b, x_a - x_b))
        if distance_sq < _TINY_STEP ** 2:
            raise DegeneratePair("x_a and x_b coincide")
        g_a = weighted_sq_residual(map, x_a, y, w)
        g_b = weighted_sq_residual(map, x_b, y, w)
        estimate = 0.0
        for t in t_grid:
            if not 0 < t < 1:
                raise ValueError(f"t must lie in (0, 1), got {t}")
            g_t = weighted_sq_residual(map, t * x_a + (1 - t) * x_b, y, w)
            lhs = abs(t * (g_t - g_a) + (1 - t) * (g_t - g_b))
            estimate = max(estimate, lhs / (t * (1 - t) * distance_sq))
        return estimate

    def compute_mu_nu(self, p: float, m: int, beta: float, c_hat: float) -> DecayConstants:
        if not c_hat > 0:
            raise NonPositiveCHat(f"c_hat must be positive, got {c_hat}")
        factor = 2.0 ** (1.0 + 2.0 / p)
        mu = factor * (m * m + 1) * beta * beta / c_hat
        nu = factor * (m * m + 1 - 2.0 ** (-2.0 / p)) / c_hat
        if mu >= 1:
            logger.info(f"mu={mu:.4g} >= 1: error recursion is not a contraction")
        return DecayConstants(mu=mu, nu=nu, c_hat=c_hat, beta=beta, m=m, p=p)

    def fit_error_decay(self, report: SolveReport, x_star) -> DecayFit:
        x_star = np.asarray(x_star, dtype=float)
        errors = [float(np.sum((s.x - x_star) ** 2)) for s in report.iterates]
        return fit_decay_rates(errors)

    def verify_feps_characterization(self, map: ResidualMap, y, z, eps: float, p: float,
                                     challengers: Iterable) -> bool:
        """
        Samplewise check: every challenger at least as bad as z in the
        weighted l2 metric w(z, eps) is also no better than z in f_eps.
        """
        if not eps > 0:
            raise NonPositiveEps(f"eps must be positive, got {eps}")
        z = map.check_input(z)
        y = map.check_output(y)
        w = optimal_weights(map.eval(z) - y, eps, p)
        g_z = weighted_sq_residual(map, z, y, w)
        f_z = eval_f_eps(map, z, y, eps, p)
        for candidate in challengers:
            if weighted_sq_residual(map, candidate, y, w) >= g_z:
                if f_z > eval_f_eps(map, candidate, y, eps, p) + 1e-10:
                    logger.info(f"Challenger {candidate} beats z in f_eps")
                    return False
        return True

    def weighted_gram_min_eigenvalue(self, matrix, w, normalize: bool = True) -> float:
        """Smallest eigenvalue of sum w_i a_i a_i^T, divided by its trace when normalized."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        w = validate_weights(w, matrix.shape[0])
        gram = matrix.T @ (matrix * w[:, None])
        smallest = float(linalg.eigvalsh(gram)[0])
        if normalize:
            smallest /= float(np.trace(gram))
        return smallest

    def critical_point_residual(self, map: ResidualMap, y, x, eps: float, p: float) -> float:
        """||grad f_eps(x)||."""
        return float(np.linalg.norm(grad_f_eps(map, x, y, eps, p)))

    def summarize(self, report: SolveReport, map: ResidualMap, y, x_star=None,
                  samples: Optional[Sequence] = None) -> Dict[str, object]:
        """Collects the per-run diagnostics used by the diagnose command."""
        results: Dict[str, object] = {"warnings": []}
        p = report.p
        y = map.check_output(y)

        if len(report.iterates) >= 2:
            ratios = self.check_uscc1_on_trace(report, map, y)
            results["uscc1_ratios"] = ratios
            results["uscc1_constant"] = min(ratios) if ratios else None
            first, second = report.iterates[0], report.iterates[1]
            if np.linalg.norm(first.x - second.x) >= _TINY_STEP:
                results["lipcond"] = self.check_lipcond(map, y, first.w, first.x, second.x,
                                                        np.linspace(0.1, 0.9, 9))
        else:
            results["warnings"].append("Trace too short for per-step checks")

        w0 = report.iterates[0].w
        eps0 = report.iterates[0].eps
        center = report.final_x if x_star is None else np.asarray(x_star, dtype=float)

        def j_objective(x):
            return j_from_residual(map.eval(x) - y, w0, eps0, p)

        try:
            results["strong_convexity"] = self.estimate_strong_convexity(j_objective, center, 1.0, 8)
        except NonFiniteEvaluation as e:
            results["warnings"].append(f"Convexity estimate failed: {e}")

        if x_star is not None:
            x_star = map.check_input(x_star)
            if samples is not None and len(samples) > 0:
                try:
                    results["bcc"] = self.estimate_bcc(map, x_star, samples, p)
                except DegenerateSample as e:
                    results["warnings"].append(str(e))
            if len(report.iterates) >= 4:
                results["decay"] = self.fit_error_decay(report, x_star)

        results["critical_point_residual"] = self.critical_point_residual(
            map, y, report.final_x, max(report.final_eps, 1e-8), p)
        return results
