"""
Seeded recovery experiments over parameter grids.

A config file is a flat list of `key=value` lines (comma-separated values
for grids, `#` comments). Each (grid point, trial) pair gets its own seed,
base_seed XOR a 64-bit BLAKE2b hash of the pair, so any single trial can be
rerun in isolation and results do not depend on scheduling.
"""
import enum
import functools
import hashlib
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from main.config import (
    DESK_M,
    DESK_N,
    IMPULSIVE_SUCCESS_THRESHOLD,
    MAX_OUTER_ITERS,
    EPS_TILDE,
    PAPER_M,
    PAPER_N,
    PR_MAX_OUTER_ITERS,
    PR_OMEGA,
    RIP_SOLUTION_NORM,
    SUCCESS_THRESHOLD,
)
from main.core.data_manager import DataManager
from main.core.exceptions import ParseError
from main.core.greedy import greedy_sparse_recovery, relative_error
from main.core.irls import MultistartPlan, SolverKind, run_convexified, run_nr_irls, solve_lp_direct
from main.core.options import IrlsConfig
from main.core.problems import (
    InstanceParams,
    NoiseSpec,
    ProblemFamily,
    make_instance,
    make_simple_1d,
)
from main.core.settings_manager import settings_manager

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
SIMPLE_1D_Y = (0.0, 0.9)


class ExperimentFamily(str, enum.Enum):
    SIMPLE_1D = "simple_1d"
    PERTURBED_RIP = "perturbed_rip"
    PHASE_RETRIEVAL = "phase_retrieval"
    IMPULSIVE_NOISE = "impulsive_noise"


GRID_DIMENSIONS = {
    ExperimentFamily.SIMPLE_1D: ("p", "start"),
    ExperimentFamily.PERTURBED_RIP: ("p", "k", "rho"),
    ExperimentFamily.PHASE_RETRIEVAL: ("p", "k", "kappa"),
    ExperimentFamily.IMPULSIVE_NOISE: ("p", "k", "alpha_p"),
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: ExperimentFamily
    p: List[float] = [1.0]
    k: List[int] = [1]
    rho: List[float] = [0.0]
    kappa: Optional[List[float]] = None
    alpha_p: List[float] = [0.0]
    start: List[float] = [0.0, 0.25, 0.5, 0.75, 1.0]
    N: int = Field(DESK_N, ge=1)
    m: int = Field(DESK_M, ge=1)
    trials: int = Field(1, ge=1)
    success_threshold: Optional[float] = Field(None, gt=0)
    solver: SolverKind = SolverKind.IRLS
    max_outer_iters: Optional[int] = Field(None, gt=0)
    omega: Optional[float] = Field(None, ge=0)
    eps_tilde: float = Field(EPS_TILDE, gt=0)
    stop_eps: float = Field(0.0, ge=0)
    base_seed: int = Field(0, ge=0)
    output_path: str = "results"
    scale: str = "desk"
    num_starts: int = Field(3, ge=1)
    x_norm: Optional[float] = Field(None, gt=0)
    timing: bool = False
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("p", "k", "rho", "kappa", "alpha_p", "start")
    @classmethod
    def _nonempty(cls, values):
        if values is not None and len(values) == 0:
            raise ValueError("grid must not be empty")
        return values

    @field_validator("scale")
    @classmethod
    def _known_scale(cls, value):
        if value not in ("desk", "paper"):
            raise ValueError("scale must be 'desk' or 'paper'")
        return value

    @model_validator(mode="after")
    def _family_defaults(self):
        updates = {}
        if self.scale == "paper":
            updates.update(N=PAPER_N, m=PAPER_M)
        if self.kappa is None:
            updates["kappa"] = [0.5] if self.family == ExperimentFamily.IMPULSIVE_NOISE else [1.0]
        if self.success_threshold is None:
            updates["success_threshold"] = (IMPULSIVE_SUCCESS_THRESHOLD
                                            if self.family == ExperimentFamily.IMPULSIVE_NOISE
                                            else SUCCESS_THRESHOLD)
        if self.max_outer_iters is None:
            updates["max_outer_iters"] = (PR_MAX_OUTER_ITERS if self.family == ExperimentFamily.PHASE_RETRIEVAL
                                          else MAX_OUTER_ITERS)
        if self.omega is None:
            sparse_pr = self.family in (ExperimentFamily.PHASE_RETRIEVAL, ExperimentFamily.IMPULSIVE_NOISE)
            updates["omega"] = PR_OMEGA if sparse_pr else 0.0
        if self.x_norm is None:
            updates["x_norm"] = RIP_SOLUTION_NORM if self.family == ExperimentFamily.PERTURBED_RIP else 1.0
        for key, value in updates.items():
            object.__setattr__(self, key, value)
        return self

    @property
    def dimensions(self) -> Tuple[str, ...]:
        return GRID_DIMENSIONS[self.family]

    def grid_points(self) -> List[Dict[str, float]]:
        """Grid points in lexicographic order of the family's dimensions."""
        axes = [sorted(set(getattr(self, dim))) for dim in self.dimensions]
        return [dict(zip(self.dimensions, values)) for values in itertools.product(*axes)]

    def irls_config(self, p: float) -> IrlsConfig:
        return settings_manager.irls_config(p=p, omega=self.omega, eps_tilde=self.eps_tilde,
                                            stop_eps=self.stop_eps, max_outer_iters=self.max_outer_iters)


_LIST_FIELDS = {"p", "k", "rho", "kappa", "alpha_p", "start"}


def parse_experiment_config(text: str, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    """
    Parses the key=value format; `overrides` replace file values before validation.

    Raises:
        ParseError: For lines that are not key=value or repeat a key.
        pydantic.ValidationError: For values that fail validation.
    """
    values: Dict[str, object] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got '{line}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ParseError(f"duplicate key '{key}'", number)
        if key in _LIST_FIELDS:
            values[key] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            values[key] = value
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.model_validate(values)


def load_experiment_config(filepath: str, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    with open(filepath, "r") as f:
        return parse_experiment_config(f.read(), overrides)


def trial_seed(base_seed: int, family: ExperimentFamily, point: Dict[str, float], trial: int) -> int:
    key = "|".join([family.value] + [f"{dim}={point[dim]!r}" for dim in sorted(point)] + [f"trial={trial}"])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "little")) & _MASK64


@dataclass
class ExperimentRecord:
    family: str
    solver: str = SolverKind.IRLS.value
    p: Optional[float] = None
    k: Optional[int] = None
    rho: Optional[float] = None
    kappa: Optional[float] = None
    alpha_p: Optional[float] = None
    start: Optional[float] = None
    trial: int = 0
    seed: int = 0
    success: int = 0
    rel_error: Optional[float] = None
    outer_iters: Optional[int] = None
    final_eps: Optional[float] = None
    runtime_ms: Optional[float] = None
    error: Optional[str] = None


@functools.lru_cache(maxsize=64)
def simple_1d_global_minimizer(p: float, resolution: float = 1e-5) -> float:
    """Grid minimizer of ||A(x) - y||_p^p over [0, 1] for the two-component toy map."""
    grid = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    values = np.abs(grid) ** p + np.abs(grid * grid - SIMPLE_1D_Y[1]) ** p
    return float(grid[int(np.argmin(values))])


def _run_simple_1d(config: ExperimentConfig, point: Dict[str, float], record: ExperimentRecord):
    irls_config = config.irls_config(point["p"])
    y = np.array(SIMPLE_1D_Y)
    if config.solver == SolverKind.DIRECT:
        report = solve_lp_direct(make_simple_1d(), y, point["p"], [point["start"]], irls_config.eps_hard_floor)
    else:
        solver = run_convexified if irls_config.omega > 0 else run_nr_irls
        report = solver(make_simple_1d(), y, irls_config, [point["start"]])
    x_global = simple_1d_global_minimizer(point["p"])
    record.rel_error = relative_error(report.final_x, np.array([x_global]))
    record.outer_iters = report.outer_iters
    record.final_eps = report.final_eps


def _run_sparse(config: ExperimentConfig, point: Dict[str, float], record: ExperimentRecord, seed: int):
    family = config.family
    kappa = point.get("kappa", config.kappa[0])
    params = InstanceParams(N=config.N, m=config.m, k=int(point["k"]), kappa=kappa,
                            norm=config.x_norm, rho=point.get("rho", 0.0))
    noise = None
    if family == ExperimentFamily.IMPULSIVE_NOISE:
        noise = NoiseSpec(alpha_p=point["alpha_p"])
    problem_family = (ProblemFamily.PERTURBED_RIP if family == ExperimentFamily.PERTURBED_RIP
                      else ProblemFamily.PHASE_RETRIEVAL)
    instance = make_instance(problem_family, params, noise, seed)

    if family == ExperimentFamily.PERTURBED_RIP:
        plan = MultistartPlan.random_in_ball(1, 0.0)
    else:
        plan = MultistartPlan.random_in_ball(config.num_starts, config.x_norm)
    report = greedy_sparse_recovery(instance.map, instance.y, params.k, config.irls_config(point["p"]),
                                    plan, rng_seed=seed, x_star=instance.x_star,
                                    threshold=config.success_threshold, solver=config.solver)
    record.rel_error = report.rel_error
    record.outer_iters = report.outer_iters
    record.final_eps = report.final_eps


def run_trial(config: ExperimentConfig, point: Dict[str, float], trial: int) -> ExperimentRecord:
    """One trial; exceptions become a failed record tagged with the error class."""
    seed = trial_seed(config.base_seed, config.family, point, trial)
    record = ExperimentRecord(family=config.family.value, solver=config.solver.value, trial=trial, seed=seed)
    for dim, value in point.items():
        setattr(record, dim, int(value) if dim == "k" else float(value))
    if config.family != ExperimentFamily.SIMPLE_1D and "kappa" not in point:
        record.kappa = float(config.kappa[0])

    started = time.perf_counter()
    try:
        if config.family == ExperimentFamily.SIMPLE_1D:
            _run_simple_1d(config, point, record)
        else:
            _run_sparse(config, point, record, seed)
        record.success = int(record.rel_error is not None and record.rel_error <= config.success_threshold)
    except Exception as e:
        logger.error(f"Trial {trial} at {point} failed: {type(e).__name__}: {e}")
        record.success = 0
        record.error = type(e).__name__
    if config.timing:
        record.runtime_ms = 1000.0 * (time.perf_counter() - started)
    return record


def summarize(records: List[ExperimentRecord], dimensions: Tuple[str, ...]) -> pd.DataFrame:
    """Recovery rate, mean relative error and mean runtime per grid point."""
    df = DataManager().records_frame(records)
    for col in ("success", "rel_error", "runtime_ms"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
    grouped = df.groupby(list(dimensions), sort=False)
    summary = grouped.agg(recovery_rate=("success", "mean"),
                          mean_rel_error=("rel_error", "mean"),
                          mean_runtime_ms=("runtime_ms", "mean")).reset_index()
    return summary


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: List[ExperimentRecord]
    summary: pd.DataFrame


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """
    Runs every (grid point, trial) on a bounded thread pool.

    Records come back in grid order, then trial order, whatever the
    completion order.
    """
    tasks = [(point, trial) for point in config.grid_points() for trial in range(config.trials)]
    workers = workers or config.workers or settings_manager.get("experiment_workers", 1)
    logger.info(f"Running {len(tasks)} trials of {config.family.value} on {workers} workers")

    if workers == 1:
        records = [run_trial(config, point, trial) for point, trial in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda task: run_trial(config, *task), tasks))

    summary = summarize(records, config.dimensions)
    for _, row in summary.iterrows():
        logger.info(f"{dict((d, row[d]) for d in config.dimensions)}: recovery {row['recovery_rate']:.3f}")
    return ExperimentResult(config=config, records=records, summary=summary)


def write_experiment(result: ExperimentResult, out_dir: Optional[str] = None) -> Dict[str, str]:
    """Writes records.csv and summary.csv under `out_dir` (default: config.output_path)."""
    out = Path(out_dir or result.config.output_path)
    manager = DataManager()
    paths = {"records": str(out / "records.csv"), "summary": str(out / "summary.csv")}
    for name, outcome in (("records", manager.export_records_csv(result.records, paths["records"])),
                          ("summary", manager.write_csv(result.summary, paths["summary"]))):
        if not outcome["success"]:
            raise OSError(f"Could not write {name}: {outcome['message']}")
    return paths
