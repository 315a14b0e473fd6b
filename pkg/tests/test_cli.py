import json
import subprocess
import sys

import numpy as np
import pytest

from dividend_eq import EquilibriumSolution, eval_V
from dividend_eq.cli import EVAL_HEADER, SWEEP_HEADER, main

BASE_CFG = {
    "mu": 1.0, "sigma": 1.0, "l_bar": 1.0, "r_bar": 1.0, "phi": 1.2,
    "discount": {"type": "pseudo", "omega": 0.3, "rho1": 0.6, "rho2": 1.0},
    "grid": {"x_min": 0.0, "x_max": 2.0, "n_points": 21},
    "sweep": {"param": "phi", "from": 1.1, "to": 2.5, "steps": 8, "x_ref": 1.0},
    "sim": {"dt": 0.01, "horizon": 5.0, "n_paths": 500, "seed": 7, "x0": 1.0},
}


@pytest.fixture
def write_cfg(tmp_path):
    def write(doc=None, **changes):
        doc = json.loads(json.dumps(BASE_CFG if doc is None else doc))
        doc.update(changes)
        path = tmp_path / f"cfg{len(list(tmp_path.iterdir()))}.json"
        path.write_text(json.dumps(doc))
        return str(path)
    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_outputs_solution(capsys, write_cfg):
    code, out, _ = run(capsys, "solve", "--config", write_cfg())
    assert code == 0
    doc = json.loads(out)
    assert doc["case"] == "three_region"
    assert abs(doc["x1"] - 0.1916) < 5e-4 and abs(doc["x2"] - 0.317) < 5e-4
    assert set(doc["rate_blocks"][0]["coefficients"]) == {"A_1", "A_2", "B_1", "B_2", "B_3"}


def test_solve_is_deterministic(capsys, write_cfg):
    cfg = write_cfg()
    assert run(capsys, "solve", "--config", cfg)[1] == run(capsys, "solve", "--config", cfg)[1]


def test_eval_header_and_rows(capsys, write_cfg):
    code, out, _ = run(capsys, "eval", "--config", write_cfg())
    lines = out.strip().split("\n")
    assert code == 0
    assert lines[0] == EVAL_HEADER == "x,V,V1,V2,dV,region,l,r"
    assert len(lines) == 22
    first = lines[1].split(",")
    assert float(first[1]) == pytest.approx(0.0, abs=1e-12) and first[5] == "inject"
    assert lines[-1].split(",")[5:] == ["pay", "1", "0"]


def test_eval_round_trip_through_solution_file(capsys, write_cfg, tmp_path):
    cfg = write_cfg()
    sol_path = tmp_path / "sol.json"
    assert run(capsys, "solve", "--config", cfg, "--output", str(sol_path))[0] == 0
    direct = run(capsys, "eval", "--config", cfg)[1]
    loaded = run(capsys, "eval", "--config", cfg, "--solution", str(sol_path))[1]
    assert direct == loaded
    sol = EquilibriumSolution.from_dict(json.loads(sol_path.read_text()))
    x = float(loaded.split("\n")[5].split(",")[0])
    assert float(loaded.split("\n")[5].split(",")[1]) == pytest.approx(float(eval_V(sol, x)), rel=1e-11)


def test_sweep_rows(capsys, write_cfg):
    code, out, _ = run(capsys, "sweep", "--config", write_cfg())
    lines = out.strip().split("\n")
    assert code == 0 and lines[0] == SWEEP_HEADER
    cases = [ln.split(",")[1] for ln in lines[1:]]
    assert cases[0] == "three_region" and cases[-1] == "two_region"
    x1 = [float(ln.split(",")[2]) for ln in lines[1:]]
    assert all(a >= b for a, b in zip(x1, x1[1:]))


def test_sweep_parallel_matches_serial(capsys, write_cfg):
    cfg = write_cfg()
    assert run(capsys, "sweep", "--config", cfg)[1] == run(capsys, "sweep", "--config", cfg, "--jobs", "4")[1]


def test_sweep_rho_pair_keeps_mean(capsys, write_cfg):
    cfg = write_cfg(sweep={"param": "rho_pair_meanfixed", "from": 0.0, "to": 0.8, "steps": 3, "x_ref": 1.0})
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    assert code == 0
    rows = out.strip().split("\n")[1:]
    # zero spread is the exponential kernel at the mean rate 0.88
    assert rows[0].split(",")[0] == "0" and rows[0].split(",")[1] != "error"


def test_sweep_marks_failed_points(capsys, write_cfg):
    cfg = write_cfg(sweep={"param": "phi", "from": 0.5, "to": 1.5, "steps": 3, "x_ref": 1.0})
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    rows = out.strip().split("\n")[1:]
    assert code == 0
    assert rows[0] == "0.5,error,nan,nan,nan"
    assert rows[2].split(",")[1] != "error"


def test_sweep_unknown_parameter(capsys, write_cfg):
    cfg = write_cfg(sweep={"param": "kappa", "from": 0, "to": 1, "steps": 2, "x_ref": 1.0})
    assert run(capsys, "sweep", "--config", cfg)[0] == 1


def test_simulate_reports_estimate(capsys, write_cfg):
    code, out, _ = run(capsys, "simulate", "--config", write_cfg())
    doc = json.loads(out)
    assert code == 0
    for key in ("mean", "std_error", "n_paths", "ruin_fraction", "part1_mean", "part2_mean",
                "truncation_bound", "closed_form", "seed"):
        assert key in doc
    assert doc["n_paths"] == 500 and doc["seed"] == 7
    assert doc["mean"] == pytest.approx(doc["omega"] * doc["part1_mean"] + (1 - doc["omega"]) * doc["part2_mean"])


def test_simulate_seed_override_and_threads(capsys, write_cfg):
    cfg = write_cfg()
    a = json.loads(run(capsys, "simulate", "--config", cfg, "--seed", "99")[1])
    assert a["seed"] == 99
    sim = dict(BASE_CFG["sim"], seed=99, n_threads=4)
    b = json.loads(run(capsys, "simulate", "--config", write_cfg(sim=sim))[1])
    assert a["mean"] == b["mean"]


def test_simulate_threshold_override(capsys, write_cfg):
    sim = dict(BASE_CFG["sim"], x1=0.0, x2=0.5)
    doc = json.loads(run(capsys, "simulate", "--config", write_cfg(sim=sim))[1])
    assert doc["thresholds_overridden"] and doc["x1"] == 0.0 and doc["x2"] == 0.5


@pytest.mark.parametrize("x0", [0.0, -1.0])
def test_simulate_rejects_non_positive_start(capsys, write_cfg, x0):
    sim = dict(BASE_CFG["sim"], x0=x0)
    code, _, err = run(capsys, "simulate", "--config", write_cfg(sim=sim))
    assert code == 1
    assert json.loads(err)["error"]["issues"][0]["code"] == "NonPositiveStart"


@pytest.mark.parametrize("key,value", [("dt", 0.0), ("n_paths", 0), ("n_threads", 0)])
def test_simulate_rejects_zero_settings(capsys, write_cfg, key, value):
    sim = dict(BASE_CFG["sim"], **{key: value})
    assert run(capsys, "simulate", "--config", write_cfg(sim=sim))[0] == 1


def test_invalid_params_exit_1(capsys, write_cfg):
    code, _, err = run(capsys, "solve", "--config", write_cfg(sigma=-1.0, phi=0.5))
    assert code == 1
    codes = [i["code"] for i in json.loads(err)["error"]["issues"]]
    assert codes == ["NonPositiveSigma", "CostNotAboveOne"]


def test_unit_cost_requires_flag(capsys, write_cfg):
    cfg = write_cfg(l_bar=2.0, r_bar=2.0, phi=1.0)
    assert run(capsys, "solve", "--config", cfg)[0] == 1
    code, out, _ = run(capsys, "solve", "--config", cfg, "--relaxed")
    assert code == 0 and abs(json.loads(out)["x2"] - 0.475) < 5e-4


def test_malformed_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run(capsys, "solve", "--config", str(p))
    assert code == 1 and json.loads(err)["error"]["issues"][0]["code"] == "MalformedJSON"


def test_unknown_keys_rejected(capsys, write_cfg):
    assert run(capsys, "solve", "--config", write_cfg(gamma=1.0))[0] == 1
    sim = dict(BASE_CFG["sim"], paths=10)
    assert run(capsys, "simulate", "--config", write_cfg(sim=sim))[0] == 1


def test_missing_file_and_bad_command(capsys, tmp_path):
    assert run(capsys, "solve", "--config", str(tmp_path / "none.json"))[0] == 1
    assert run(capsys, "explode", "--config", "x")[0] == 1


def test_numerical_failure_exit_2(capsys, write_cfg, monkeypatch):
    from dividend_eq import cli
    from dividend_eq.errors import RootNotFound

    def boom(*a, **k):
        raise RootNotFound("no admissible threshold pair found", [{"stage": "newton"}])

    monkeypatch.setattr(cli, "solve_equilibrium", boom)
    code, out, err = run(capsys, "solve", "--config", write_cfg())
    assert code == 2
    assert json.loads(err)["error"]["type"] == "RootNotFound"
    assert json.loads(out)["error"]["trail"] == [{"stage": "newton"}]


def test_console_entry_point(write_cfg):
    res = subprocess.run([sys.executable, "-m", "dividend_eq.cli", "eval", "--config", write_cfg()],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith(EVAL_HEADER + "\n")
    values = np.array([float(r.split(",")[1]) for r in res.stdout.strip().split("\n")[1:]])
    assert np.all(np.diff(values) > 0)
