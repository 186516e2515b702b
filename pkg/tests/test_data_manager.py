import numpy as np
import pandas as pd
import pytest

from main.core.data_manager import DataManager, RECORD_FIELDS, format_frame, parse_problem_text
from main.core.exceptions import ParseError
from main.core.experiment import ExperimentRecord
from main.core.models import ExperimentRecordEntry, ExperimentRun
from main.core.problems import (
    InstanceParams,
    PerturbedRipMap,
    PhaseRetrievalMap,
    ProblemFamily,
    Simple1DMap,
    make_instance,
)

TOY_FILE = """# lp-irls problem
family=simple_1d
seed=0
begin y
0,0.9
end
"""


def _records():
    return [
        ExperimentRecord(family="perturbed_rip", p=1.0, k=1, rho=0.5, kappa=1.0, trial=0,
                         seed=2 ** 63 + 5, success=1, rel_error=1e-9, outer_iters=4, final_eps=1e-8),
        ExperimentRecord(family="perturbed_rip", solver="direct", p=1.0, k=1, rho=0.5, kappa=1.0, trial=1,
                         seed=17, success=0, error="SingularNormalEquations"),
    ]


def test_parse_toy_problem():
    instance = parse_problem_text(TOY_FILE)
    assert isinstance(instance.map, Simple1DMap)
    np.testing.assert_array_equal(instance.y, [0.0, 0.9])
    assert instance.x_star is None


def test_problem_file_preserves_every_bit(tmp_path):
    dm = DataManager()
    path = tmp_path / "rip.txt"
    rip = make_instance(ProblemFamily.PERTURBED_RIP, InstanceParams(k=2, rho=0.5), rng_seed=3)
    assert dm.write_problem_file(rip, str(path))["success"] is True
    loaded = dm.read_problem_file(str(path))
    assert isinstance(loaded.map, PerturbedRipMap)
    np.testing.assert_array_equal(loaded.y, rip.y)
    np.testing.assert_array_equal(loaded.map.a1, rip.map.a1)
    np.testing.assert_array_equal(loaded.support, rip.support)
    assert loaded.seed == 3
    assert loaded.meta["rho"] == 0.5

    pr = make_instance(ProblemFamily.PHASE_RETRIEVAL, InstanceParams(k=1), rng_seed=4)
    dm.write_problem_file(pr, str(tmp_path / "pr.txt"))
    assert isinstance(dm.read_problem_file(str(tmp_path / "pr.txt")).map, PhaseRetrievalMap)


@pytest.mark.parametrize("text,line", [
    ("family=simple_1d\nbegin y\n0,abc\nend\n", 3),
    ("family=simple_1d\nnot a pair\n", 2),
    ("family=simple_1d\nbegin y\n0,0.9\n", 3),
    ("family=simple_1d\nbegin q\nend\n", 2),
    ("family=linear\nbegin y\n1\nend\n", 4),
])
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as excinfo:
        parse_problem_text(text)
    assert excinfo.value.line_number == line
    assert f"line {line}" in str(excinfo.value)


def test_inconsistent_data_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_problem_text("family=simple_1d\nbegin y\n1,2,3\nend\n")


def test_format_frame():
    df = pd.DataFrame({"a": [0.1, None, float("nan")], "b": [1, 2, 3], "c": ["x", None, "z"]})
    formatted = format_frame(df)
    assert formatted["a"].tolist() == ["0.10000000000000001", "", ""]
    assert formatted["b"].tolist() == ["1", "2", "3"]
    assert formatted["c"].tolist() == ["x", "", "z"]


def test_records_csv(tmp_path):
    dm = DataManager()
    path = tmp_path / "records.csv"
    assert dm.export_records_csv(_records(), str(path))["success"] is True
    lines = path.read_bytes().decode().split("\n")
    assert lines[0] == ",".join(RECORD_FIELDS)
    assert "\r" not in path.read_bytes().decode()
    first = lines[1].split(",")
    assert first[RECORD_FIELDS.index("seed")] == str(2 ** 63 + 5)
    assert first[RECORD_FIELDS.index("alpha_p")] == ""
    assert lines[2].split(",")[RECORD_FIELDS.index("error")] == "SingularNormalEquations"


def test_trace_csv(tmp_path, toy_map, toy_y):
    from main.core.irls import run_nr_irls
    from main.core.options import IrlsConfig

    report = run_nr_irls(toy_map, toy_y, IrlsConfig(p=1.1), [0.5])
    path = tmp_path / "trace.csv"
    assert DataManager().export_trace_csv(report, str(path))["success"] is True
    df = pd.read_csv(path)
    assert list(df.columns) == ["n", "eps", "J", "lp_residual", "step_norm"]
    assert len(df) == len(report.iterates)
    assert (df["J"].diff().dropna() <= 1e-12 * df["J"].abs().max()).all()


def test_store_and_reload_records(db_session, tmp_path):
    dm = DataManager(db=db_session)
    run_id = dm.save_experiment("perturbed_rip", 2 ** 64 - 1, _records(), "family=perturbed_rip")
    assert run_id is not None

    run = db_session.query(ExperimentRun).filter_by(id=run_id).first()
    assert run.base_seed == str(2 ** 64 - 1)
    assert run.rng == "philox"
    assert db_session.query(ExperimentRecordEntry).count() == 2

    df = dm.load_records(run_id)
    assert list(df.columns) == RECORD_FIELDS
    assert df["seed"].tolist() == [2 ** 63 + 5, 17]
    assert df["success"].tolist() == [1, 0]
    assert df["solver"].tolist() == ["irls", "direct"]

    stored = tmp_path / "stored.csv"
    direct = tmp_path / "direct.csv"
    assert dm.export_stored_records_csv(run_id, str(stored))["success"] is True
    dm.export_records_csv(_records(), str(direct))
    assert stored.read_bytes() == direct.read_bytes()
