import json
import subprocess
import sys
from pathlib import Path

import pytest

from sigmahess.cli import RunConfig, main, run
from sigmahess.errors import ConfigError

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"


def _summary(prefix):
    return json.loads(Path(f"{prefix}.json").read_text())


def test_verify_identities_exit_zero(tmp_path):
    out = tmp_path / "ids"
    assert main(["verify-identities", "--dims", "3,4", "--samples", "20", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["schema_version"] == 1 and s["violation_count"] == 0 and s["rows"] > 0
    header = Path(f"{out}.csv").read_text().splitlines()[0]
    assert "," in header


def test_counterexample_reports_polynomial(tmp_path):
    out = tmp_path / "cx"
    assert main(["counterexample", "--t", "1", "--K", "1", "--out", str(out)]) == 0
    s = _summary(out)
    assert s["poly_value"] == pytest.approx(-376.0)
    assert 10.0 in s["thresholds"]["t_negative_for_all_K"]


def test_solve_quadratic(tmp_path):
    out = tmp_path / "q"
    assert main(["solve", "--problem", str(PROBLEMS / "quadratic_n2.json"), "--out", str(out)]) == 0
    s = _summary(out)
    assert s["converged"] and s["thresholds"]["residual_norm"] < 1e-10
    assert Path(f"{out}.grid").exists()


def test_solve_failure_exit_one(tmp_path):
    prob = tmp_path / "bad.json"
    prob.write_text(json.dumps({"n": 2, "h": 0.125, "f": 1,
                                "boundary": {"expr": "-40*(x0**2 + x1**2)"}}))
    out = tmp_path / "bad"
    assert main(["solve", "--problem", str(prob), "--out", str(out)]) == 1
    s = _summary(out)
    assert not s["converged"] and s["violations"]


def test_sphere_examples(tmp_path):
    assert main(["sphere", "--dims", "3", "--out", str(tmp_path / "s1")]) == 0
    assert _summary(tmp_path / "s1")["rows"] == 1
    assert main(["sphere", "--dims", "3", "--f", "3", "--out", str(tmp_path / "s2")]) == 1


def test_curvature_single_jet(tmp_path):
    out = tmp_path / "c"
    assert main(["curvature", "--du", "[0, 0]", "--d2u", "[[2, 0], [0, 1]]",
                 "--signature", "euclidean", "--out", str(out)]) == 0
    assert Path(f"{out}.csv").read_text().splitlines()[1].split(",")[1] == "2;1"


@pytest.mark.parametrize("argv", [
    ["verify-identities", "--dims", "2"],
    ["verify-lemmas", "--lemmas", "nope"],
    ["solve"],
    ["solve", "--problem", "/nonexistent/problem.json"],
    ["curvature", "--du", "[0.9, 0.9]", "--d2u", "[[1, 0], [0, 1]]"],
    ["verify-identities", "--samples", "0"],
])
def test_config_errors_exit_two(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2


def test_unknown_command_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_run_validates():
    with pytest.raises(ConfigError):
        run(RunConfig("verify-identities", seed=-1))


def test_determinism(tmp_path):
    argv = ["verify-lemmas", "--dims", "4", "--samples", "30", "--lemmas", "guan17,leR,ratio"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == main(argv + ["--out", str(b)])
    assert Path(f"{a}.csv").read_bytes() == Path(f"{b}.csv").read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sigmahess.cli", "sphere", "--out", str(tmp_path / "m")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
