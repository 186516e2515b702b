import enum
import logging

from pydantic import BaseModel, ConfigDict, Field, model_validator

from main.config import (
    EPS_HARD_FLOOR,
    EPS_INIT,
    EPS_TILDE,
    INNER_GRAD_TOL,
    INNER_MAX_ITERS,
    INNER_STEP_TOL,
    LAMBDA_DOWN,
    LAMBDA_INIT,
    LAMBDA_MAX,
    LAMBDA_UP,
    MAX_OUTER_ITERS,
    STATIONARITY_TOL,
)

logger = logging.getLogger(__name__)


class InnerMethod(str, enum.Enum):
    GAUSS_NEWTON = "GaussNewton"
    LEVENBERG_MARQUARDT = "LevenbergMarquardt"


class Damping(str, enum.Enum):
    IDENTITY = "identity"   # lambda * I
    DIAGONAL = "diagonal"   # lambda * diag(J^T W J)


class InnerSolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: InnerMethod = InnerMethod.LEVENBERG_MARQUARDT
    max_iters: int = Field(INNER_MAX_ITERS, gt=0)
    grad_tol: float = Field(INNER_GRAD_TOL, gt=0)
    step_tol: float = Field(INNER_STEP_TOL, gt=0)
    lambda_init: float = Field(LAMBDA_INIT, gt=0)
    lambda_up: float = Field(LAMBDA_UP, gt=1)
    lambda_down: float = Field(LAMBDA_DOWN, gt=0, lt=1)
    lambda_max: float = Field(LAMBDA_MAX, gt=0)
    damping: Damping = Damping.IDENTITY


class IrlsConfig(BaseModel):
    """
    Outer-loop parameters.

    omega = 0 selects the plain reweighting loop; omega > 0 the proximal
    (convexified) one. p = 2 is accepted as a degenerate case with unit weights.
    """
    model_config = ConfigDict(frozen=True)

    p: float = Field(1.0, ge=1.0, le=2.0)
    eps_tilde: float = Field(EPS_TILDE, gt=0)
    eps_hard_floor: float = Field(EPS_HARD_FLOOR, gt=0)
    max_outer_iters: int = Field(MAX_OUTER_ITERS, gt=0)
    omega: float = Field(0.0, ge=0)
    inner: InnerSolverOptions = Field(default_factory=InnerSolverOptions)
    stop_eps: float = Field(0.0, ge=0)
    stationarity_tol: float = Field(STATIONARITY_TOL, ge=0)  # 0 disables the stationarity stop

    @model_validator(mode="after")
    def _check_floor(self):
        if self.eps_hard_floor >= EPS_INIT:
            raise ValueError(f"eps_hard_floor must be below the initial eps {EPS_INIT}")
        if self.eps_tilde <= self.eps_hard_floor:
            logger.warning(f"eps_tilde={self.eps_tilde:g} is not above eps_hard_floor={self.eps_hard_floor:g}; "
                           "runs end as soon as eps reaches eps_tilde")
        return self
