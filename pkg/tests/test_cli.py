import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from maxentcert import cli
from maxentcert.cli import (EXIT_CONFIG, EXIT_NO_ROUTE, EXIT_NOT_CONVERGED, EXIT_OK,
                            EXIT_REJECTED, EXIT_SELFTEST, main, run_selftest)

EXPONENTIAL = """\
schema: maxentcert/v1
dimension: 1
support: {shape: box, lower: [0], upper: [.inf]}
constraints:
  - {kind: power, p: 1, u: 1.0}
"""

GAUSSIAN = """\
schema: maxentcert/v1
dimension: 1
support: {shape: full}
constraints:
  - {kind: power, p: 2, u: 1.0}
"""

NO_ROUTE = """\
schema: maxentcert/v1
dimension: 1
support: {shape: full}
constraints:
  - {kind: power, p: 1, absolute: false, u: 1.0}
"""

GAUSSIAN_2D = """\
schema: maxentcert/v1
dimension: 2
support: {shape: full}
constraints:
  - {kind: power, p: 2, index: 0, u: 1.0}
  - {kind: power, p: 2, index: 1, u: 2.0}
output: {grid: {points: 41}}
"""


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("MAXENT_SEED", raising=False)


def write(tmp_path, text, name="problem.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    lines = open(path, newline="").read().split("\n")
    assert lines[-1] == ""
    return lines[0], np.array([[float(v) for v in ln.split(",")] for ln in lines[1:-1]])


def test_solve_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    out = tmp_path / "run"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "certified" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == "maxentcert-report/v1"
    assert report["outcome"]["exit_code"] == 0
    assert report["certificate"]["verdict"] == "certified"
    assert report["solution"]["lambda"][0] == pytest.approx(1.0, rel=1e-6)
    assert "timings" not in report
    assert "total_s" in json.loads((out / "timings.json").read_text())["timings"]
    sol = json.loads((out / "solution.json").read_text())
    assert sol["alpha"] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("text,points", [(EXPONENTIAL, 401), (GAUSSIAN, 401), (GAUSSIAN_2D, 41)])
def test_density_csv_format(tmp_path, text, points):
    cfg = write(tmp_path, text)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    raw = (tmp_path / "density.csv").read_bytes()
    assert b"\r" not in raw
    header, rows = read_csv(tmp_path / "density.csv")
    d = rows.shape[1] - 1
    assert header == ",".join([f"x_{i + 1}" for i in range(d)] + ["density"])
    assert rows.shape[0] == points ** d
    assert np.all(rows[:, -1] >= 0)
    first = raw.split(b"\n")[1].split(b",")
    assert all(len(v.lstrip(b"-").replace(b".", b"").split(b"e")[0].lstrip(b"0")) <= 17 for v in first)
    assert float(first[0]) == float("%.17g" % float(first[0]))
    widths = [np.diff(np.unique(rows[:, i]))[0] for i in range(d)]
    assert rows[:, -1].sum() * np.prod(widths) == pytest.approx(1.0, abs=1e-2)


def test_csv_values_are_round_trip_exact():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert float(cli.fmt(math.pi)) == math.pi
    assert cli.csv_text(["x_1", "density"], [[1.0, 2.0]]) == "x_1,density\n1,2\n"


def test_csv_restricted_to_support(tmp_path):
    cfg = write(tmp_path, EXPONENTIAL + "output: {grid: {lower: [-1], upper: [3], points: 40}}\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    _, rows = read_csv(tmp_path / "density.csv")
    assert rows[:, 0].min() >= 0 and rows.shape[0] == 30


def test_solve_is_deterministic(tmp_path):
    cfg = write(tmp_path, GAUSSIAN)
    for d in ("a", "b"):
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) == 0
    for f in ("report.json", "density.csv", "solution.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, EXPONENTIAL.replace("u: 1.0", "u: abc"))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "constraints[0].u (line 5)" in err
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_argument_errors_exit_2(capsys):
    assert main([]) == EXIT_CONFIG
    assert main(["solve"]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG
    capsys.readouterr()


def test_no_route_exit_and_force(tmp_path, capsys):
    cfg = write(tmp_path, NO_ROUTE)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NO_ROUTE
    assert "no existence route" in capsys.readouterr().err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["outcome"]["status"] == "no-route"
    assert report["diagnosis"]["route"] == "none"
    assert not (tmp_path / "density.csv").exists()
    assert main(["diagnose", "--config", cfg, "--quiet"]) == EXIT_NO_ROUTE
    # forcing an unnormalizable problem still cannot produce a density
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--force", "--quiet"]) \
        == EXIT_NO_ROUTE


def test_not_converged_exit(tmp_path):
    cfg = write(tmp_path, GAUSSIAN + "solver: {max_iter: 1, tol: 1.0e-14}\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_NOT_CONVERGED
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["outcome"]["status"] == "not-converged"


def _solution(tmp_path, lam, alpha=None):
    data = {"lambda": lam}
    if alpha is not None:
        data["alpha"] = alpha
    p = tmp_path / "sol.json"
    p.write_text(json.dumps(data))
    return str(p)


def test_verify_exit_codes(tmp_path, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    assert main(["verify", "--config", cfg, "--solution", _solution(tmp_path, [1.0])]) == EXIT_OK
    assert main(["verify", "--config", cfg, "--solution", _solution(tmp_path, [1.1])]) \
        == EXIT_REJECTED
    assert "slackness" in capsys.readouterr().err
    assert main(["verify", "--config", cfg, "--solution", _solution(tmp_path, [-0.5])]) \
        == EXIT_CONFIG
    assert main(["verify", "--config", cfg, "--solution", _solution(tmp_path, [1.0, 2.0])]) \
        == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["verify", "--config", cfg, "--solution", str(bad)]) == EXIT_CONFIG


def test_verify_writes_report(tmp_path):
    cfg = write(tmp_path, EXPONENTIAL)
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg, "--solution", _solution(tmp_path, [1.0], 0.0),
                 "--out", str(out), "--quiet"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["command"] == "verify" and report["certificate"]["verdict"] == "certified"


def test_eval_reads_stdin(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    monkeypatch.setattr(sys, "stdin", io.StringIO("0\n1.5\n\n-1\n"))
    assert main(["eval", "--config", cfg, "--quiet", "--solution",
                 _solution(tmp_path, [1.0], 0.0)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    vals = [float(ln.split()[-1]) for ln in lines]
    assert vals == pytest.approx([1.0, math.exp(-1.5), 0.0], rel=1e-12)
    assert lines[0].split()[0] == "0"


def test_eval_solves_when_no_solution_given(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, GAUSSIAN_2D)
    monkeypatch.setattr(sys, "stdin", io.StringIO("0 0\n"))
    assert main(["eval", "--config", cfg, "--quiet"]) == EXIT_OK
    v = float(capsys.readouterr().out.split()[-1])
    assert v == pytest.approx(1 / (2 * math.pi * math.sqrt(2)), rel=1e-5)


def test_eval_rejects_bad_points(tmp_path, monkeypatch):
    cfg = write(tmp_path, GAUSSIAN_2D)
    monkeypatch.setattr(sys, "stdin", io.StringIO("0 0 0\n"))
    assert main(["eval", "--config", cfg, "--quiet"]) == EXIT_CONFIG
    monkeypatch.setattr(sys, "stdin", io.StringIO("a b\n"))
    assert main(["eval", "--config", cfg, "--quiet"]) == EXIT_CONFIG


def test_sample_stdout_and_file(tmp_path, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    sol = _solution(tmp_path, [1.0], 0.0)
    assert main(["sample", "--config", cfg, "--solution", sol, "--n", "2000", "--seed", "5",
                 "--quiet"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text.startswith("x_1\n")
    X = np.array([float(v) for v in text.split("\n")[1:-1]])
    assert X.size == 2000 and X.min() >= 0
    assert X.mean() == pytest.approx(1.0, abs=0.1)
    assert main(["sample", "--config", cfg, "--solution", sol, "--n", "2000", "--seed", "5",
                 "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    assert (tmp_path / "samples.csv").read_text() == text
    assert main(["sample", "--config", cfg, "--solution", sol, "--n", "0"]) == EXIT_CONFIG


def test_seed_env_overrides_sample_seed(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    sol = _solution(tmp_path, [1.0], 0.0)
    args = ["sample", "--config", cfg, "--solution", sol, "--n", "50", "--quiet"]
    runs = {}
    for seed_flag, env in (("1", "9"), ("2", "9"), ("1", None)):
        if env is None:
            monkeypatch.delenv("MAXENT_SEED", raising=False)
        else:
            monkeypatch.setenv("MAXENT_SEED", env)
        assert main(args + ["--seed", seed_flag]) == EXIT_OK
        runs[(seed_flag, env)] = capsys.readouterr().out
    assert runs[("1", "9")] == runs[("2", "9")]
    assert runs[("1", "9")] != runs[("1", None)]


def test_seed_env_recorded_in_report(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXENT_SEED", "7")
    cfg = write(tmp_path, EXPONENTIAL)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["seed_override"] == 7
    assert report["config"]["solver"]["seed"] == 7


def test_diagnose_output(tmp_path, capsys):
    cfg = write(tmp_path, GAUSSIAN)
    assert main(["diagnose", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    diag = json.loads(capsys.readouterr().out)
    assert diag["route"] == "stabilizing"
    lo, hi = diag["entropy_bracket"]
    assert lo <= 0.5 * math.log(2 * math.pi * math.e) <= hi
    assert json.loads((tmp_path / "report.json").read_text())["command"] == "diagnose"


def test_quiet_suppresses_stdout(tmp_path, capsys):
    cfg = write(tmp_path, EXPONENTIAL)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_selftest_passes(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("uniform", "exponential", "gaussian", "laplace", "truncated-exponential"):
        line = next(ln for ln in out.splitlines() if ln.startswith(name + " "))
        assert line.split()[1:] == ["pass", "pass", "pass"]


def test_selftest_forced_failure(capsys):
    assert main(["selftest", "--solver-tol", "0.1"]) == EXIT_SELFTEST
    captured = capsys.readouterr()
    assert "FAIL" in captured.out and "gaussian/certify" in captured.err
    rows = run_selftest(solver_tol=0.1)
    assert not all(ok for _, _, ok, _ in rows)


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, NO_ROUTE)
    r = subprocess.run([sys.executable, "-m", "maxentcert.cli", "diagnose", "--config", cfg,
                        "--quiet"], capture_output=True, text=True)
    assert r.returncode == EXIT_NO_ROUTE
