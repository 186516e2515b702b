import pandas as pd
import pytest

from main.cli import EXIT_BAD_INPUT, EXIT_OK, EXIT_SOLVER_FAILURE, main
from main.core.data_manager import DataManager
from main.core.problems import InstanceParams, ProblemFamily, make_instance

TOY_FILE = "# lp-irls problem\nfamily=simple_1d\nseed=0\nbegin y\n0,0.9\nend\n"


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.txt"
    path.write_text(TOY_FILE)
    return str(path)


def test_solve_prints_result_and_writes_trace(toy_file, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    assert main(["solve", toy_file, "--p", "1.1", "--x0", "0.5", "--out", str(trace)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "final_x:" in out
    assert "final_lp_residual:" in out
    assert "termination:" in out
    df = pd.read_csv(trace)
    assert (df["J"].diff().dropna() <= 1e-12 * df["J"].abs().max()).all()


def test_stop_eps_above_initial_eps(toy_file, tmp_path):
    trace = tmp_path / "trace.csv"
    assert main(["solve", toy_file, "--p", "1.5", "--x0", "0.5", "--stop-eps", "2", "--out", str(trace)]) == EXIT_OK
    assert len(pd.read_csv(trace)) == 2


def test_solve_variants(toy_file):
    assert main(["solve", toy_file, "--p", "1.5", "--omega", "1", "--x0", "0.5"]) == EXIT_OK
    assert main(["solve", toy_file, "--p", "1.7", "--starts", "3", "--seed", "2"]) == EXIT_OK
    assert main(["solve", toy_file, "--p", "1.5", "--direct", "--x0", "0.5"]) == EXIT_OK


def test_solve_on_support_pads_the_solution(tmp_path, capsys):
    path = tmp_path / "rip.txt"
    DataManager().write_problem_file(make_instance(ProblemFamily.PERTURBED_RIP, InstanceParams(k=2), rng_seed=1),
                                     str(path))
    assert main(["solve", str(path), "--p", "1"]) == EXIT_OK
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("final_x:")][0]
    assert line.count(",") == 19


def test_malformed_file_exits_with_2(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("family=simple_1d\nbegin y\n0,zero\nend\n")
    assert main(["solve", str(path)]) == EXIT_BAD_INPUT
    assert "line 3" in capsys.readouterr().err


def test_bad_flags_exit_with_2(toy_file, tmp_path):
    assert main(["solve", toy_file, "--p", "3"]) == EXIT_BAD_INPUT
    assert main(["solve", toy_file, "--x0", "0.1,0.2"]) == EXIT_BAD_INPUT
    assert main(["solve", str(tmp_path / "missing.txt")]) == EXIT_BAD_INPUT


def test_solver_failure_exits_with_1(tmp_path, capsys):
    path = tmp_path / "inf.txt"
    path.write_text("family=simple_1d\nbegin y\ninf,0.9\nend\n")
    assert main(["solve", str(path), "--p", "1.5"]) == EXIT_SOLVER_FAILURE
    assert "NonFiniteEvaluation" in capsys.readouterr().err


def test_diagnose_toy_problem(toy_file, tmp_path, capsys):
    html = tmp_path / "report.html"
    code = main(["diagnose", toy_file, "--p", "1", "--x0", "0.75", "--mu-nu", "--c-hat", "80", "--beta", "1",
                 "--m", "2", "--html", str(html)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    values = dict(line.split(": ", 1) for line in lines if ": " in line and not line.startswith("warning"))
    assert float(values["alpha_hat"]) >= 1.0 - 1e-9
    assert float(values["beta_hat"]) <= 3.0 + 1e-9
    assert values["mu"] == "0.5"
    assert values["nu"] == "0.475"
    assert html.exists()


def test_diagnose_needs_c_hat(toy_file):
    assert main(["diagnose", toy_file, "--mu-nu"]) == EXIT_BAD_INPUT


def test_experiment_command(tmp_path, capsys):
    config = tmp_path / "toy.cfg"
    config.write_text("family=simple_1d\np=1.1,1.9\nstart=0,1\n")
    out = tmp_path / "out"
    db_url = f"sqlite:///{tmp_path / 'runs.db'}"
    assert main(["experiment", str(config), "--out", str(out), "--db", db_url]) == EXIT_OK
    records = pd.read_csv(out / "records.csv")
    assert len(records) == 4
    assert "stored as run" in capsys.readouterr().out


def test_experiment_bad_config(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text("family=simple_1d\ntrials=0\n")
    assert main(["experiment", str(config)]) == EXIT_BAD_INPUT
