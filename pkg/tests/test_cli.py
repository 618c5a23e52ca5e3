import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from localflow.cli import main
from localflow.instance import load_problem
from localflow.sensitivity import solve_exact

FIXTURE_NAMES = ("triangle", "path", "two_node", "grid4x4", "cycle7", "rr3_20")


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_generate_cycle_is_triangle(capsys):
    code, out = run(["generate", "cycle", 3], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["vertices"] == [0, 1, 2]
    assert [(e["tail"], e["head"]) for e in d["edges"]] == [(0, 1), (1, 2), (2, 0)]
    assert sum(d["external_flow"].values()) == 0


def test_generate_grid(capsys):
    code, out = run(["generate", "grid", 3], capsys)
    d = json.loads(out)
    assert len(d["vertices"]) == 9 and len(d["edges"]) == 12


def test_generate_parity_error(capsys):
    code, _ = run(["generate", "random-regular", 9, "--k", 3], capsys)
    assert code == 2


def test_generate_seed_env(capsys, monkeypatch):
    monkeypatch.setenv("LOCALFLOW_SEED", "3")
    _, a = run(["generate", "random-regular", 12], capsys)
    _, b = run(["generate", "random-regular", 12, "--seed", 3], capsys)
    _, c = run(["generate", "random-regular", 12, "--seed", 4], capsys)
    assert a == b != c


def test_solve_fixtures(fixtures_dir, capsys):
    code, out = run(["solve", fixtures_dir / "triangle.json"], capsys)
    assert code == 0
    d = json.loads(out)
    assert np.allclose(d["x"], [2 / 3, -1 / 3, -1 / 3])
    assert d["spectral"]["lambda"] == pytest.approx(0.5)
    assert d["pgd"]["distance_to_exact"] <= 1e-12
    _, out = run(["solve", fixtures_dir / "path.json"], capsys)
    assert np.allclose(json.loads(out)["x"], [1, 1])


@pytest.mark.parametrize("name", ["unbalanced", "disconnected", "missing"])
def test_solve_invalid_input(fixtures_dir, capsys, name):
    code, _ = run(["solve", fixtures_dir / f"{name}.json"], capsys)
    assert code == 2


def test_perturb_triangle(fixtures_dir, capsys):
    code, out = run(["perturb", fixtures_dir / "triangle.json",
                     "--perturbation", '{"1": 1, "2": -1}', "--radius", 1, "--iters", 10], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["bias_measured"] <= 1e-12 and d["bias_bound"] == 0.0
    assert d["ball_vertices"] == 3 and d["radius"] == 1


def test_perturb_zero_iterations(fixtures_dir, capsys):
    _, out = run(["perturb", fixtures_dir / "cycle7.json", "--perturbation", '{"0": 1, "1": -1}',
                  "--radius", 2, "--iters", 0], capsys)
    d = json.loads(out)
    assert d["t"] == 0
    # x_hat = x*(b): the error is the full change of the optimum
    p = load_problem(fixtures_dir / "cycle7.json")
    pert = np.zeros(7)
    pert[0], pert[1] = 1, -1
    change = np.linalg.norm(solve_exact(p.with_flow(p.b + pert)).x - solve_exact(p).x)
    assert d["error_measured"] == pytest.approx(change)


def test_perturb_support_outside_ball(fixtures_dir, capsys):
    code, _ = run(["perturb", fixtures_dir / "cycle7.json", "--perturbation", '{"0": 1, "3": -1}',
                   "--radius", 1, "--iters", 3], capsys)
    assert code == 2


def test_perturb_tuned(fixtures_dir, capsys):
    code, out = run(["perturb", fixtures_dir / "triangle.json", "--perturbation",
                     '{"1": 1, "2": -1}', "--epsilon", 0.01], capsys)
    d = json.loads(out)
    assert code == 0 and d["within_epsilon"]
    assert d["radius"] == d["tuning"]["radius"]


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_verify_fixtures(fixtures_dir, capsys, name):
    code, out = run(["verify", fixtures_dir / f"{name}.json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["passed"]
    if name in ("two_node", "path", "grid4x4"):
        assert d["checks"]["green_difference_series"]["skipped"].startswith("lambda=1")
    if name == "triangle":
        assert max(c["residual"] for k, c in d["checks"].items()
                   if "residual" in c and "sigmas" not in k) <= 1e-8


def test_verify_tolerance_failure(fixtures_dir, capsys):
    code, _ = run(["verify", fixtures_dir / "triangle.json", "--tol", "1e-30"], capsys)
    assert code == 1


def test_sweep_csv_deterministic(capsys):
    argv = ["sweep", "--sizes", "20,30", "--radius", "1,2", "--iters", "0,5", "--seed", 1]
    _, a = run(argv, capsys)
    _, b = run(argv, capsys)
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert list(rows[0]) == ["n", "r", "t", "epsilon", "bias_meas", "bias_bound", "var_meas",
                             "var_bound", "error", "rho"]
    assert len(rows) == 8
    for r in rows:
        assert float(r["error"]) <= float(r["bias_meas"]) + float(r["var_meas"]) + 1e-10


def test_output_file(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["generate", "path", "4", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["vertices"] == [0, 1, 2, 3]


def test_console_script_entry(fixtures_dir):
    res = subprocess.run([sys.executable, "-m", "localflow.cli", "solve",
                          str(fixtures_dir / "unbalanced.json")], capture_output=True, text=True)
    assert res.returncode == 2 and "not balanced" in res.stderr
