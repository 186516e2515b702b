import enum
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from main.config import FD_RELATIVE_STEP
from main.core.exceptions import (
    DimensionMismatch,
    InvalidDimensions,
    InvalidWeights,
    JacobianUnavailable,
    NonFiniteEvaluation,
)

logger = logging.getLogger(__name__)


class ResidualMap(ABC):
    """
    Nonlinear map A: R^k -> R^m.

    Subclasses implement `_evaluate` and, when `has_jacobian` is true,
    `_jacobian`. Instances hold only their constants and are safe to share
    between threads.

    Args:
        dim_in: Input dimension k.
        dim_out: Output dimension m.
        overdetermined: Enforce m >= k. Ambient maps on R^N that are only
            ever solved after restriction to a support pass False.
    """
    has_jacobian = True
    # A(-x) == A(x); recovery is then judged up to a global sign.
    sign_symmetric = False

    def __init__(self, dim_in: int, dim_out: int, overdetermined: bool = True):
        if int(dim_in) < 1 or int(dim_out) < 1:
            raise InvalidDimensions(f"Dimensions must be positive, got k={dim_in}, m={dim_out}")
        if overdetermined and dim_out < dim_in:
            raise InvalidDimensions(f"Expected m >= k, got k={dim_in}, m={dim_out}")
        self._dim_in = int(dim_in)
        self._dim_out = int(dim_out)

    @property
    def dim_in(self) -> int:
        return self._dim_in

    @property
    def dim_out(self) -> int:
        return self._dim_out

    def check_input(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self._dim_in,):
            raise DimensionMismatch(f"Expected input of shape ({self._dim_in},), got {x.shape}")
        return x

    def check_output(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self._dim_out,):
            raise DimensionMismatch(f"Expected data of shape ({self._dim_out},), got {y.shape}")
        return y

    def eval(self, x) -> np.ndarray:
        return self._evaluate(self.check_input(x))

    def jacobian(self, x) -> np.ndarray:
        if not self.has_jacobian:
            raise JacobianUnavailable(f"{type(self).__name__} has no analytic Jacobian")
        return self._jacobian(self.check_input(x))

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    @abstractmethod
    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        ...

    def _jacobian(self, x: np.ndarray) -> np.ndarray:
        raise JacobianUnavailable(f"{type(self).__name__} has no analytic Jacobian")

    def __repr__(self):
        return f"<{type(self).__name__}(k={self._dim_in}, m={self._dim_out})>"


def validate_weights(w, size: Optional[int] = None) -> np.ndarray:
    """Returns `w` as a float array, raising InvalidWeights unless strictly positive and finite."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if size is not None and w.shape != (size,):
        raise DimensionMismatch(f"Expected {size} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidWeights("Weights must be strictly positive and finite")
    return w


def finite_difference_jacobian(map: ResidualMap, x, h: Optional[float] = None) -> np.ndarray:
    """
    Central-difference Jacobian of `map` at `x`.

    Args:
        map: The residual map.
        x: Evaluation point.
        h: Fixed step. When None each column uses 1e-6 * max(1, |x_j|).

    Returns:
        m x k matrix with entry (i, j) = (A_i(x + h e_j) - A_i(x - h e_j)) / 2h.
    """
    x = map.check_input(x)
    jac = np.empty((map.dim_out, map.dim_in))
    for j in range(map.dim_in):
        step = h if h is not None else FD_RELATIVE_STEP * max(1.0, abs(x[j]))
        forward = x.copy()
        backward = x.copy()
        forward[j] += step
        backward[j] -= step
        a_plus = map.eval(forward)
        a_minus = map.eval(backward)
        if not (np.all(np.isfinite(a_plus)) and np.all(np.isfinite(a_minus))):
            raise NonFiniteEvaluation(f"Non-finite map value while differencing coordinate {j}")
        jac[:, j] = (a_plus - a_minus) / (2.0 * step)
    return jac


class Termination(str, enum.Enum):
    EPS_ZERO = "EpsZero"
    EPS_BELOW_FLOOR = "EpsBelowFloor"
    MAX_ITERS = "MaxIters"
    INNER_SOLVER_FAILURE = "InnerSolverFailure"
    STALLED = "Stalled"
    STATIONARY = "Stationary"


@dataclass(frozen=True)
class IrlsState:
    """Snapshot (x^n, w^n, eps_n) of one outer iteration with J(x^n, w^n, eps_n)."""
    n: int
    x: np.ndarray
    w: np.ndarray
    eps: float
    j_value: float
    lp_residual: float = float("nan")
    step_norm: float = float("nan")


@dataclass
class SolveReport:
    iterates: List[IrlsState]
    termination: Termination
    final_x: np.ndarray
    final_lp_residual: float
    wall_time: float
    p: float = 1.0
    omega: float = 0.0
    error: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def outer_iters(self) -> int:
        return self.iterates[-1].n

    @property
    def final_eps(self) -> float:
        return self.iterates[-1].eps

    def to_frame(self) -> pd.DataFrame:
        """Trace table with columns n, eps, J, lp_residual, step_norm."""
        return pd.DataFrame(
            {
                "n": [s.n for s in self.iterates],
                "eps": [s.eps for s in self.iterates],
                "J": [s.j_value for s in self.iterates],
                "lp_residual": [s.lp_residual for s in self.iterates],
                "step_norm": [s.step_norm for s in self.iterates],
            }
        )

    def __repr__(self):
        return (f"<SolveReport(termination={self.termination.value}, iters={self.outer_iters}, "
                f"residual={self.final_lp_residual:.6g})>")
