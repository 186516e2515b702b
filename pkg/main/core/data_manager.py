import contextlib
import dataclasses
import logging
from pathlib import Path
from typing import Dict, Generator, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from sqlalchemy.orm import Session

from main.config import RNG_NAME
from main.core.database import SessionLocal
from main.core.exceptions import ParseError
from main.core.models import ExperimentRecordEntry, ExperimentRun
from main.core.problems import (
    LinearMap,
    PerturbedRipMap,
    PhaseRetrievalMap,
    ProblemFamily,
    ProblemInstance,
    Simple1DMap,
)
from main.core.residual import SolveReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PROBLEM_HEADER = "# lp-irls problem"
RECORD_FIELDS = ["family", "solver", "p", "k", "rho", "kappa", "alpha_p", "start", "trial", "seed",
                 "success", "rel_error", "outer_iters", "final_eps", "runtime_ms", "error"]


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if np.isnan(value) else FLOAT_FORMAT % value
    return str(value)


def format_frame(df: pd.DataFrame) -> pd.DataFrame:
    """Renders every cell as text: 17 significant digits, missing values empty."""
    return pd.DataFrame({col: [_format_value(v) for v in df[col].tolist()] for col in df.columns},
                        columns=list(df.columns))


def _format_row(values: Iterable) -> str:
    return ",".join(_format_value(v) for v in values)


class DataManager:
    """
    Reads and writes problem files, trace and experiment tables, and the
    SQL result store.
    """
    def __init__(self, db: Session = None):
        self.db = db

    @contextlib.contextmanager
    def _get_session(self) -> Generator[Session, None, None]:
        """
        Yields the existing session or creates a new one.
        """
        if self.db:
            yield self.db
        else:
            session = SessionLocal()
            try:
                yield session
                session.commit()
            except Exception:
                session.rollback()
                raise
            finally:
                session.close()

    # CSV tables

    def write_csv(self, df: pd.DataFrame, filepath: str) -> dict:
        try:
            Path(filepath).parent.mkdir(parents=True, exist_ok=True)
            format_frame(df).to_csv(filepath, index=False, lineterminator="\n")
            logger.info(f"Wrote {len(df)} rows to {filepath}")
            return {"success": True, "message": f"Wrote {len(df)} rows to {filepath}"}
        except OSError as e:
            logger.error(f"CSV export failed: {e}")
            return {"success": False, "message": str(e)}

    def export_trace_csv(self, report: SolveReport, filepath: str) -> dict:
        return self.write_csv(report.to_frame(), filepath)

    def records_frame(self, records: Sequence) -> pd.DataFrame:
        rows = [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in records]
        return pd.DataFrame(rows, columns=RECORD_FIELDS)

    def export_records_csv(self, records: Sequence, filepath: str) -> dict:
        return self.write_csv(self.records_frame(records), filepath)

    # Problem files

    def write_problem_file(self, instance: ProblemInstance, filepath: str) -> dict:
        """
        Serializes an instance: key=value meta lines, then `begin <name>` /
        `end` blocks of comma-separated rows.
        """
        map = instance.map
        lines = [PROBLEM_HEADER]
        meta = dict(instance.meta)
        if isinstance(map, Simple1DMap):
            meta["family"] = ProblemFamily.SIMPLE_1D.value
            matrix = None
        elif isinstance(map, PerturbedRipMap):
            meta["family"] = ProblemFamily.PERTURBED_RIP.value
            meta["rho"] = map.rho
            matrix = map.a1
        elif isinstance(map, PhaseRetrievalMap):
            meta["family"] = ProblemFamily.PHASE_RETRIEVAL.value
            matrix = map.vectors
        elif isinstance(map, LinearMap):
            meta["family"] = ProblemFamily.LINEAR.value
            matrix = map.matrix
        else:
            return {"success": False, "message": f"Cannot serialize {type(map).__name__}"}
        meta["seed"] = instance.seed
        for key in sorted(meta):
            lines.append(f"{key}={_format_value(meta[key])}")

        blocks = [("y", [instance.y])]
        if instance.x_star is not None:
            blocks.append(("x_star", [instance.x_star]))
        if instance.support is not None:
            blocks.append(("support", [instance.support]))
        if matrix is not None:
            blocks.append(("matrix", list(matrix)))
        if isinstance(map, PerturbedRipMap):
            blocks.append(("z_ref", [map.z_ref]))
        for name, rows in blocks:
            lines.append(f"begin {name}")
            lines.extend(_format_row(row) for row in rows)
            lines.append("end")

        try:
            Path(filepath).parent.mkdir(parents=True, exist_ok=True)
            with open(filepath, "w", newline="\n") as f:
                f.write("\n".join(lines) + "\n")
            return {"success": True, "message": f"Problem written to {filepath}"}
        except OSError as e:
            logger.error(f"Could not write problem file '{filepath}': {e}")
            return {"success": False, "message": str(e)}

    def read_problem_file(self, filepath: str) -> ProblemInstance:
        """
        Parses a problem file.

        Raises:
            ParseError: On any malformed line, naming it.
        """
        with open(filepath, "r") as f:
            text = f.read()
        return parse_problem_text(text)

    # Result store

    def save_experiment(self, family: str, base_seed: int, records: Sequence,
                        config_text: Optional[str] = None) -> Optional[int]:
        try:
            with self._get_session() as session:
                run = ExperimentRun(family=family, base_seed=str(base_seed), rng=RNG_NAME,
                                    config_text=config_text)
                session.add(run)
                session.flush()
                entries = []
                for position, record in enumerate(records):
                    row = dataclasses.asdict(record) if dataclasses.is_dataclass(record) else dict(record)
                    row["seed"] = str(row["seed"])
                    row["success"] = int(row["success"])
                    entries.append(ExperimentRecordEntry(run_id=run.id, position=position, **row))
                session.add_all(entries)
                session.commit()
                logger.info(f"Stored {len(entries)} records as run {run.id}")
                return run.id
        except Exception as e:
            logger.error(f"Could not store experiment: {e}")
            return None

    def load_records(self, run_id: int) -> pd.DataFrame:
        with self._get_session() as session:
            query = (session.query(ExperimentRecordEntry)
                     .filter(ExperimentRecordEntry.run_id == run_id)
                     .order_by(ExperimentRecordEntry.position))
            df = pd.read_sql(query.statement, session.bind)
        df = df[RECORD_FIELDS].copy()
        df["seed"] = df["seed"].astype(object).map(int)
        return df

    def export_stored_records_csv(self, run_id: int, filepath: str) -> dict:
        try:
            return self.write_csv(self.load_records(run_id), filepath)
        except Exception as e:
            logger.error(f"Export of run {run_id} failed: {e}")
            return {"success": False, "message": str(e)}


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text in ("True", "False"):
        return text == "True"
    return text


def parse_problem_text(text: str) -> ProblemInstance:
    meta: Dict[str, object] = {}
    blocks: Dict[str, List[List[float]]] = {}
    current: Optional[str] = None
    last_line = 0

    for number, raw in enumerate(text.splitlines(), start=1):
        last_line = number
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if current is not None:
            if line == "end":
                current = None
                continue
            try:
                blocks[current].append([float(v) for v in line.split(",")])
            except ValueError:
                raise ParseError(f"expected comma-separated numbers in block '{current}', got '{line}'", number)
            continue
        if line.startswith("begin "):
            current = line[len("begin "):].strip()
            if current not in ("y", "x_star", "support", "matrix", "z_ref"):
                raise ParseError(f"unknown block '{current}'", number)
            if current in blocks:
                raise ParseError(f"duplicate block '{current}'", number)
            blocks[current] = []
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got '{line}'", number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", number)
        meta[key] = _parse_scalar(value)

    if current is not None:
        raise ParseError(f"block '{current}' is not terminated", last_line)
    if "family" not in meta:
        raise ParseError("missing 'family'", last_line)
    if "y" not in blocks or len(blocks["y"]) != 1:
        raise ParseError("expected a single-row 'y' block", last_line)

    try:
        family = ProblemFamily(meta["family"])
    except ValueError:
        raise ParseError(f"unknown family '{meta['family']}'", last_line)

    matrix = np.array(blocks["matrix"], dtype=float) if "matrix" in blocks else None
    if family != ProblemFamily.SIMPLE_1D and (matrix is None or matrix.ndim != 2):
        raise ParseError(f"family '{family.value}' requires a rectangular 'matrix' block", last_line)

    try:
        if family == ProblemFamily.SIMPLE_1D:
            map = Simple1DMap()
        elif family == ProblemFamily.LINEAR:
            map = LinearMap(matrix, overdetermined=False)
        elif family == ProblemFamily.PHASE_RETRIEVAL:
            map = PhaseRetrievalMap(matrix)
        else:
            if "z_ref" not in blocks:
                raise ParseError("perturbed_rip requires a 'z_ref' block", last_line)
            map = PerturbedRipMap(matrix, float(meta.get("rho", 0.0)), blocks["z_ref"][0])
        y = np.array(blocks["y"][0])
        map.check_output(y)
    except ValueError as e:
        if isinstance(e, ParseError):
            raise
        raise ParseError(f"inconsistent problem data: {e}", last_line)

    x_star = np.array(blocks["x_star"][0]) if "x_star" in blocks else None
    support = np.array(blocks["support"][0], dtype=int) if "support" in blocks else None
    seed = int(meta.pop("seed", 0))
    return ProblemInstance(map=map, y=y, x_star=x_star, support=support, seed=seed, meta=meta)
