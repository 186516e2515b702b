"""
Weighted nonlinear least squares solver used for every outer iteration.

Minimizes F(x) = 1/2 sum w_i (A_i(x) - y_i)^2 + omega ||x - u||^2 with a
damped Gauss-Newton (Levenberg-Marquardt) iteration on the normal equations

    (J^T W J + 2 omega I + lambda D) d = -(J^T W r + 2 omega (x - u))

where D is I or diag(J^T W J). Steps are accepted only when F decreases.
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg

from main.config import MAX_HALVINGS, RIDGE_FACTOR
from main.core.exceptions import NonFiniteEvaluation, SingularNormalEquations
from main.core.options import Damping, InnerMethod, InnerSolverOptions
from main.core.residual import ResidualMap, validate_weights

logger = logging.getLogger(__name__)

_ROUNDING = 8.0 * np.finfo(float).eps


@dataclass(frozen=True)
class ProximalTerm:
    """omega ||x - center||^2; a None center means the starting point."""
    omega: float = 0.0
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValueError(f"omega must be nonnegative, got {self.omega}")


class InnerResult(NamedTuple):
    x: np.ndarray
    converged: bool
    trace: List[float]


def _objective(r: np.ndarray, w: np.ndarray, x: np.ndarray, omega: float, center: np.ndarray) -> float:
    shift = x - center
    return float(0.5 * np.sum(w * r * r) + omega * np.dot(shift, shift))


def _normal_equations(jac: np.ndarray, r: np.ndarray, w: np.ndarray, x: np.ndarray,
                      omega: float, center: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    weighted = jac * w[:, None]
    matrix = jac.T @ weighted
    rhs = -(weighted.T @ r)
    if omega > 0:
        matrix = matrix + 2.0 * omega * np.eye(jac.shape[1])
        rhs = rhs - 2.0 * omega * (x - center)
    return matrix, rhs


def gn_normal_matrix(map: ResidualMap, x, y, w, prox: Optional[ProximalTerm] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gauss-Newton matrix and right-hand side at x.

    Returns:
        (J^T W J + 2 omega I, -(J^T W r + 2 omega (x - u))) with r = A(x) - y.
    """
    x = map.check_input(x)
    y = map.check_output(y)
    w = validate_weights(w, map.dim_out)
    prox = prox or ProximalTerm()
    center = x if prox.center is None else map.check_input(prox.center)
    r = map.eval(x) - y
    return _normal_equations(map.jacobian(x), r, w, x, prox.omega, center)


def solve_symmetric(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve, retried once with a ridge of 1e-14 * trace."""
    try:
        return linalg.cho_solve(linalg.cho_factor(matrix), rhs)
    except linalg.LinAlgError:
        ridge = RIDGE_FACTOR * float(np.trace(matrix))
        if not ridge > 0 or not np.isfinite(ridge):
            raise SingularNormalEquations("Normal matrix is singular and has no positive trace")
        logger.debug(f"Cholesky failed, retrying with ridge {ridge:.3e}")
        try:
            return linalg.cho_solve(linalg.cho_factor(matrix + ridge * np.eye(matrix.shape[0])), rhs)
        except linalg.LinAlgError as e:
            raise SingularNormalEquations(f"Normal matrix is singular: {e}") from e


class _Problem:
    """Bundles the fixed data of one inner solve."""

    def __init__(self, map, y, w, omega, center):
        self.map = map
        self.y = y
        self.w = w
        self.omega = omega
        self.center = center

    def residual(self, x):
        return self.map.eval(x) - self.y

    def objective(self, x, r):
        return _objective(r, self.w, x, self.omega, self.center)

    def system(self, x, r):
        return _normal_equations(self.map.jacobian(x), r, self.w, x, self.omega, self.center)

    def accepts(self, f_new, f_old, x_new, r_new, grad_norm_old) -> bool:
        if not np.isfinite(f_new):
            return False
        if f_new < f_old:
            return True
        # Ties at rounding level are settled by the gradient norm.
        if f_new <= f_old + _ROUNDING * abs(f_old):
            _, rhs = self.system(x_new, r_new)
            return float(np.linalg.norm(rhs)) < grad_norm_old
        return False


def lm_solve(map: ResidualMap, y, w, x0, prox: Optional[ProximalTerm] = None,
             opts: Optional[InnerSolverOptions] = None) -> InnerResult:
    """
    Minimizes the (optionally proximal) weighted least squares objective from x0.

    Args:
        map: Residual map with an analytic Jacobian.
        y: Data vector.
        w: Strictly positive weights.
        x0: Starting point.
        prox: Proximal term; defaults to omega = 0.
        opts: Solver options.

    Returns:
        InnerResult(x, converged, trace) where trace lists F after each accepted step.
    """
    opts = opts or InnerSolverOptions()
    prox = prox or ProximalTerm()
    x = map.check_input(x0).copy()
    if not np.all(np.isfinite(x)):
        raise NonFiniteEvaluation("Starting point is not finite")
    center = x.copy() if prox.center is None else map.check_input(prox.center)
    problem = _Problem(map, map.check_output(y), validate_weights(w, map.dim_out), float(prox.omega), center)

    r = problem.residual(x)
    f = problem.objective(x, r)
    if not np.isfinite(f):
        raise NonFiniteEvaluation("Objective is not finite at the starting point")
    trace = [f]
    gauss_newton = opts.method == InnerMethod.GAUSS_NEWTON
    lam = 0.0 if gauss_newton else opts.lambda_init
    converged = False

    for _ in range(opts.max_iters):
        matrix, rhs = problem.system(x, r)
        grad_norm = float(np.linalg.norm(rhs))
        if grad_norm <= opts.grad_tol:
            converged = True
            break
        step_floor = opts.step_tol * (1.0 + float(np.linalg.norm(x)))

        if gauss_newton:
            d = solve_symmetric(matrix, rhs)
            if np.linalg.norm(d) <= step_floor:
                converged = True
                break
            t = 1.0
            accepted = False
            for _ in range(MAX_HALVINGS):
                x_new = x + t * d
                r_new = problem.residual(x_new)
                f_new = problem.objective(x_new, r_new)
                if problem.accepts(f_new, f, x_new, r_new, grad_norm):
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                logger.debug("Gauss-Newton line search found no descent")
                break
        else:
            if opts.damping == Damping.DIAGONAL:
                scale = np.diag(matrix).copy()
                scale[scale <= 0] = 1.0
                damping = np.diag(scale)
            else:
                damping = np.eye(matrix.shape[0])
            while True:
                d = solve_symmetric(matrix + lam * damping, rhs)
                if np.linalg.norm(d) <= step_floor:
                    converged = True
                    break
                x_new = x + d
                r_new = problem.residual(x_new)
                f_new = problem.objective(x_new, r_new)
                if problem.accepts(f_new, f, x_new, r_new, grad_norm):
                    lam = max(lam * opts.lambda_down, 1e-20)
                    break
                lam *= opts.lambda_up
                if lam > opts.lambda_max:
                    raise SingularNormalEquations(f"Damping exceeded {opts.lambda_max:.1e} without descent")
            if converged:
                break

        x, r, f = x_new, r_new, f_new
        trace.append(f)

    return InnerResult(x=x, converged=converged, trace=trace)


def inner_objective(map: ResidualMap, x, y, w, prox: Optional[ProximalTerm] = None) -> float:
    """F(x) = 1/2 ||A(x) - y||_w^2 + omega ||x - u||^2."""
    prox = prox or ProximalTerm()
    x = map.check_input(x)
    center = x if prox.center is None else map.check_input(prox.center)
    r = map.eval(x) - map.check_output(y)
    return _objective(r, validate_weights(w, map.dim_out), x, prox.omega, center)
