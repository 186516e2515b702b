"""
The auxiliary functional J, the smoothed lp residual f_eps and the
weight/epsilon updates of the reweighting loop.

    J(x, w, eps) = p/2 [ sum w_i r_i^2 + sum (eps^2 w_i + (2-p)/p w_i^(p/(p-2))) ]
    f_eps(x)     = sum (r_i^2 + eps^2)^(p/2)

with r = A(x) - y. At w = optimal_weights(r, eps, p) the two coincide.
"""
import logging
from dataclasses import dataclass

import numpy as np

from main.core.exceptions import (
    DimensionMismatch,
    EmptyResidual,
    InvalidP,
    NonPositiveEps,
)
from main.core.residual import ResidualMap, validate_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsilonUpdate:
    n_min: float
    m_max: float
    next_eps: float


def _check_p(p: float, upper: float = 2.0) -> float:
    p = float(p)
    if not (1.0 <= p <= upper):
        raise InvalidP(f"p must lie in [1, {upper}], got {p}")
    return p


def residual(map: ResidualMap, x, y) -> np.ndarray:
    y = map.check_output(y)
    return map.eval(x) - y


def weighted_sq_residual(map: ResidualMap, x, y, w) -> float:
    r = residual(map, x, y)
    w = validate_weights(w, map.dim_out)
    return float(np.sum(w * r * r))


def j_from_residual(r: np.ndarray, w: np.ndarray, eps: float, p: float) -> float:
    """J evaluated on a precomputed residual vector."""
    p = _check_p(p)
    if r.shape != w.shape:
        raise DimensionMismatch(f"Residual {r.shape} and weights {w.shape} differ")
    total = np.sum(w * r * r) + eps * eps * np.sum(w)
    if p < 2.0:
        total += (2.0 - p) / p * np.sum(w ** (p / (p - 2.0)))
    return float(0.5 * p * total)


def eval_J(map: ResidualMap, x, y, w, eps: float, p: float) -> float:
    w = validate_weights(w, map.dim_out)
    return j_from_residual(residual(map, x, y), w, float(eps), p)


def f_eps_from_residual(r: np.ndarray, eps: float, p: float) -> float:
    return float(np.sum((r * r + eps * eps) ** (0.5 * p)))


def eval_f_eps(map: ResidualMap, x, y, eps: float, p: float) -> float:
    p = _check_p(p)
    return f_eps_from_residual(residual(map, x, y), float(eps), p)


def optimal_weights(residual_vec, eps: float, p: float) -> np.ndarray:
    """w_i = (r_i^2 + eps^2)^((p-2)/2), the minimizer of J(x, ., eps)."""
    if eps <= 0:
        raise NonPositiveEps(f"eps must be positive, got {eps}")
    p = _check_p(p)
    r = np.atleast_1d(np.asarray(residual_vec, dtype=float))
    return (r * r + eps * eps) ** (0.5 * (p - 2.0))


def update_epsilon(residual_vec, eps_n: float, eps_tilde: float) -> EpsilonUpdate:
    """eps_{n+1} = min(max(min|r_i|, eps_tilde), eps_n, max|r_i|)."""
    r = np.abs(np.atleast_1d(np.asarray(residual_vec, dtype=float)))
    if r.size == 0:
        raise EmptyResidual("Cannot update eps from an empty residual")
    n_min = float(r.min())
    m_max = float(r.max())
    next_eps = min(max(n_min, eps_tilde), eps_n, m_max)
    return EpsilonUpdate(n_min=n_min, m_max=m_max, next_eps=float(next_eps))


def grad_J_x(map: ResidualMap, x, y, w, p: float) -> np.ndarray:
    """p * J_A(x)^T (w * r): gradient of J in x (independent of eps)."""
    p = _check_p(p)
    w = validate_weights(w, map.dim_out)
    r = residual(map, x, y)
    return p * map.jacobian(x).T @ (w * r)


def grad_f_eps(map: ResidualMap, x, y, eps: float, p: float) -> np.ndarray:
    p = _check_p(p)
    r = residual(map, x, y)
    scale = (r * r + eps * eps) ** (0.5 * (p - 2.0))
    return p * map.jacobian(x).T @ (scale * r)


def lp_norm(v, p: float) -> float:
    if p < 1:
        raise InvalidP(f"p must be at least 1, got {p}")
    v = np.abs(np.atleast_1d(np.asarray(v, dtype=float)))
    return float(np.sum(v ** p) ** (1.0 / p))


def weighted_l2_norm(v, w) -> float:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    w = validate_weights(w, v.size)
    return float(np.sqrt(np.sum(w * v * v)))


def lp_residual(map: ResidualMap, x, y, p: float) -> float:
    return lp_norm(residual(map, x, y), p)
