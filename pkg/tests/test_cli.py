import json
import subprocess
import sys

import numpy as np
import pytest

from fcnar.cli import main
from fcnar.io import load_panel, read_json, read_table


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture
def small_sim(tmp_path, capsys):
    out = tmp_path / "sim"
    code, res, _ = run(capsys, "simulate", "--scenario", "B1", "--seed", 7, "--N", 8, "--T", 300,
                       "--output-dir", out)
    assert code == 0, res
    return out


def test_simulate_is_byte_identical(tmp_path, capsys):
    out = tmp_path / "s"
    args = ["simulate", "--scenario", "B1", "--seed", 7, "--N", 10, "--T", 120, "--output-dir", out]
    assert run(capsys, *args)[0] == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert run(capsys, *args)[0] == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second and set(first) == {"panel.csv", "thresholds.csv", "weights.csv"}
    text = first["panel.csv"].decode().splitlines()
    assert text[0].startswith("# fcnar") and text[1].startswith("# command: fcnar simulate")
    assert text[2] == "# seed: 7"


def test_fit_ci_test_forecast_pipeline(tmp_path, capsys, small_sim):
    out = tmp_path / "run"
    data = ["--panel", small_sim / "panel.csv", "--thresholds", small_sim / "thresholds.csv",
            "--weights", small_sim / "weights.csv"]
    code, res, err = run(capsys, "fit", *data, "--order", 2, "--n-knots", 3, "--train-end", 250,
                         "--dump-design", "--output-dir", out)
    assert code == 0, err
    fit_doc = read_json(out / "fit.json")
    assert fit_doc["fit"]["T_eff"] == 249 and fit_doc["meta"][0].startswith("fcnar")
    cols, rows = read_table(out / "design.csv")
    assert len(rows) == 8 * 249

    code, res, err = run(capsys, "ci", "--fit", out / "fit.json", "--panel", small_sim / "panel.csv",
                         "--thresholds", small_sim / "thresholds.csv", "--node", 1, "--grid", 200,
                         "--range", "0.05,0.95", "--output-dir", out)
    assert code == 0, err
    cols, rows = read_table(out / "ci.csv")
    assert cols == ["u", "node", "lag", "a_hat", "a_lo", "a_hi", "b_hat", "b_lo", "b_hi"]
    assert len(rows) == 200 and {r[1] for r in rows} == {"1"}
    u = np.array([float(r[0]) for r in rows])
    U = load_panel(small_sim / "thresholds.csv").X[0, 1:]
    assert u[0] == pytest.approx(np.quantile(U, 0.05)) and u[-1] == pytest.approx(np.quantile(U, 0.95))

    code, res, err = run(capsys, "test", "--fit", out / "fit.json", "--kind", "C1", "--node", 2,
                         "--output-dir", out)
    assert code == 0, err
    rep = read_json(out / "test.json")
    assert rep["test"]["df"][0] == 4 and 0 <= rep["test"]["p_value"] <= 1

    code, res, err = run(capsys, "forecast", "--fit", out / "fit.json", *data,
                         "--baselines", "NAR,NodeAR", "--output-dir", out)
    assert code == 0, err
    fc = read_json(out / "forecast.json")
    assert {m["model_tag"] for m in fc["forecasts"]} == {"FCNAR", "NAR", "AR"}
    cols, rows = read_table(out / "forecast.csv")
    assert cols == ["model", "time", "node", "actual", "predicted"]
    assert len(rows) == 3 * 50 * 8


def test_select_then_fit(tmp_path, capsys, small_sim):
    out = tmp_path / "sel"
    data = ["--panel", small_sim / "panel.csv", "--thresholds", small_sim / "thresholds.csv",
            "--weights", small_sim / "weights.csv"]
    code, res, err = run(capsys, "select", *data, "--order", "1,2", "--n-knots", "0,2",
                         "--output-dir", out)
    assert code == 0, err
    sel = read_json(out / "selection.json")["selected"]
    cols, rows = read_table(out / "selection_trace.csv")
    assert len(rows) == 4
    aics = [float(r[cols.index("aic")]) for r in rows]
    assert sel["aic"] == pytest.approx(min(aics))
    code, res, err = run(capsys, "fit", *data, "--from-selection", out / "selection.json",
                         "--output-dir", out)
    assert code == 0, err
    spec = read_json(out / "fit.json")["fit"]["spec"]
    assert (spec["order"], spec["n_knots"]) == (sel["order"], sel["n_knots"])


def test_config_precedence(tmp_path, capsys, small_sim, caplog):
    out = tmp_path / "cfg"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"panel": str(small_sim / "panel.csv"),
                               "thresholds": str(small_sim / "thresholds.csv"),
                               "weights": str(small_sim / "weights.csv"),
                               "order": 3, "n-knots": 2, "lambda": 0.001}))
    code, res, err = run(capsys, "fit", "--config", cfg, "--order", 2, "--output-dir", out)
    assert code == 0, err
    spec = read_json(out / "fit.json")["fit"]
    assert spec["spec"]["order"] == 2 and spec["spec"]["n_knots"] == 2
    assert spec["method"] == "ridge" and spec["lam"] == 0.001
    assert "overrides config" in caplog.text
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    code, _, err = run(capsys, "fit", "--config", bad)
    assert code == 1 and json.loads(err)["status"] == "error"


@pytest.mark.filterwarnings("ignore:lambda\\*sqrt")
def test_cross_validated_lambda(tmp_path, capsys, small_sim):
    out = tmp_path / "cv"
    code, res, err = run(capsys, "fit", "--panel", small_sim / "panel.csv", "--thresholds",
                         small_sim / "thresholds.csv", "--weights", small_sim / "weights.csv",
                         "--order", 2, "--n-knots", 2, "--lambda", "cv", "--lambda-grid", "0,0.01,0.1",
                         "--output-dir", out)
    assert code == 0, err
    doc = read_json(out / "fit.json")
    assert doc["cross_validation"]["lambda"] in (0.0, 0.01, 0.1)
    assert len(doc["cross_validation"]["rmse"]) == 3


def test_error_json_and_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--panel", tmp_path / "missing.csv", "--weights", "w.csv")
    assert code == 2
    payload = json.loads(err)
    assert payload["status"] == "error" and payload["command"] == "fit"
    code, _, err = run(capsys, "ci", "--fit", tmp_path / "x.json")
    assert code == 1 and "panel" in json.loads(err)["message"]
    code, _, err = run(capsys, "simulate", "--scenario", "Z9", "--output-dir", tmp_path)
    assert code == 2 and "unknown scenario" in json.loads(err)["message"]


def test_stability_command(tmp_path, capsys):
    code, res, _ = run(capsys, "stability", "--scenario", "B2", "--output-dir", tmp_path)
    assert code == 0
    doc = read_json(tmp_path / "stability.json")["stability"]
    # sup|a| + sup|b| = 0.7 + 0.6, inflated by 1%
    assert doc["rho"] == pytest.approx(1.01 * 1.3) and doc["stable"] is False


def test_benchmark_forecast_comparison_layout(tmp_path, capsys):
    code, res, err = run(capsys, "benchmark", "--forecast-comparison", "--reps", 1, "--N", 10, "--seed", 1,
                         "--output-dir", tmp_path)
    assert code == 0, err
    cols, rows = read_table(tmp_path / "forecast_comparison.csv")
    assert cols == ["model", "B1", "B2", "B3"]
    assert [r[0] for r in rows] == ["FCNAR", "NAR", "AR"]
    assert all(np.isfinite(float(v)) for r in rows for v in r[1:])


def test_convert(tmp_path, capsys):
    src = tmp_path / "long.csv"
    src.write_text("time,node,value\n0,a,1\n0,b,2\n1,a,3\n1,b,4\n")
    code, res, _ = run(capsys, "convert", "--long", src, "--output-dir", tmp_path)
    assert code == 0 and res["result"] == {"N": 2, "T": 2}
    np.testing.assert_array_equal(load_panel(tmp_path / "panel.csv").X, [[1, 3], [2, 4]])


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fcnar.cli", "stability", "--scenario", "B1",
                           "--output-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
