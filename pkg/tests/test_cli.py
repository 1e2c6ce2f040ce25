import json

import numpy as np
import pytest

from atmdiag.cli import main
from atmdiag.data import load_series, read_curves
from panels import atm_panel


@pytest.fixture
def panel_csv(tmp_path):
    panel, _ = atm_panel(np.random.default_rng(0), 0.5, 30, per_period=200, m=200)
    f = tmp_path / "panel.csv"
    f.write_text("period,value\n" + "".join(f"{p},{v!r}\n" for p, v in panel.records))
    return f


@pytest.fixture
def series_json(tmp_path):
    f = tmp_path / "s.json"
    assert main(["simulate", "--alpha", "0.4", "--n", "60", "--grid-m", "200",
                 "--burn-in", "20", "--out", str(f)]) == 0
    return f


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_is_seeded(tmp_path, series_json):
    again = tmp_path / "again.json"
    other = tmp_path / "other.json"
    base = ["simulate", "--alpha", "0.4", "--n", "60", "--grid-m", "200", "--burn-in", "20"]
    assert main(base + ["--out", str(again)]) == 0
    assert main(base + ["--seed", "5", "--out", str(other)]) == 0
    assert again.read_bytes() == series_json.read_bytes()
    assert other.read_bytes() != series_json.read_bytes()
    s = load_series(series_json)
    assert s.series.n == 60 and s.series.grid.m == 200 and s.meta["alpha"] == [0.4]


def test_simulate_csv_and_higher_order(tmp_path):
    f = tmp_path / "s.csv"
    assert main(["simulate", "--alpha", "0.3,0.2", "--n", "25", "--grid-m", "100",
                 "--family", "poly", "--format", "csv", "--out", str(f)]) == 0
    assert load_series(f).series.n == 25


def test_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, ["simulate", "--alpha", "1.2", "--n", "30"])
    assert code == 2 and "error" in err
    code, _, _ = run(capsys, ["fit", "--series", str(tmp_path / "missing.json")])
    assert code == 3
    code, _, _ = run(capsys, ["analyze", "--input", str(tmp_path / "missing.csv")])
    assert code == 3
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--n", "30"])
    assert info.value.code == 2


def test_fit_and_diagnose(capsys, series_json):
    code, out, _ = run(capsys, ["fit", "--series", str(series_json)])
    assert code == 0
    fit = json.loads(out)
    assert -1 < fit["alpha_hat"] < 1 and fit["branch"] in ("plus", "minus")
    code, out, _ = run(capsys, ["diagnose", "--series", str(series_json), "--ks", "2,4"])
    rows = json.loads(out)
    assert code == 0 and {(r["test"], r["K"]) for r in rows} == {
        ("mcleod", 2), ("mcleod", 4), ("split", 2), ("split", 4)}
    code, out, _ = run(capsys, ["diagnose", "--series", str(series_json), "--test", "split",
                                "--f-n", "30", "--l-n", "60", "--format", "csv"])
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("test,K,statistic") and len(lines) == 4
    code, _, _ = run(capsys, ["diagnose", "--series", str(series_json), "--f-n", "3",
                              "--test", "split"])
    assert code == 2


def test_monte_carlo_commands(tmp_path, capsys):
    small = ["--ns", "30", "--ks", "2", "--reps", "3", "--grid-m", "100", "--burn-in", "10"]
    code, out, _ = run(capsys, ["mc-size", "--alphas", "0.2"] + small)
    assert code == 0 and len(json.loads(out)["cells"]) == 2
    code, out, _ = run(capsys, ["mc-power", "--pairs", "0.4:0.2", "--format", "csv"] + small)
    assert code == 0 and out.splitlines()[0].startswith("kind,parameter")
    code, out, _ = run(capsys, ["validate-condition", "--alphas", "0.5", "--n", "40", "--K", "3",
                                "--reps", "2", "--grid-m", "100", "--burn-in", "10"])
    assert code == 0 and {c["method"] for c in json.loads(out)["cells"]} == {"L1", "L2"}
    cfg = tmp_path / "study.ini"
    cfg.write_text("[study]\nkind = size\nparameters = 0.2\nns = 30\nks = 2\nreps = 2\n"
                   "grid_m = 100\nburn_in = 10\n")
    out_file = tmp_path / "table.json"
    code, out, _ = run(capsys, ["mc-size", "--config", str(cfg), "--out", str(out_file)])
    assert code == 0 and "mcleod" in out and json.loads(out_file.read_text())["metadata"]["reps"] == 2
    code, _, _ = run(capsys, ["mc-power", "--config", str(cfg)])
    assert code == 2
    cfg.write_text("[study]\nkind = size\n")
    code, _, _ = run(capsys, ["mc-size", "--config", str(cfg)])
    assert code == 3


def test_analyze_panel(capsys, panel_csv):
    code, out, err = run(capsys, ["analyze", "--input", str(panel_csv), "--grid-m", "200",
                                  "--ks", "2,3"])
    assert code == 0 and "alpha_hat" in err
    d = json.loads(out)
    assert len(d["periods"]) == 30 and d["omega"][0] < d["omega"][1]
    code, out, _ = run(capsys, ["analyze", "--input", str(panel_csv), "--grid-m", "200",
                                "--ks", "2", "--format", "csv"])
    assert code == 0 and len(out.strip().splitlines()) == 3


def test_forecast_panel(capsys, panel_csv):
    code, out, err = run(capsys, ["forecast", "--input", str(panel_csv), "--grid-m", "200",
                                  "--train-len", "20"])
    assert code == 0 and "average Wasserstein error" in err
    d = json.loads(out)
    assert len(d["records"]) == 10
    code, _, _ = run(capsys, ["forecast", "--input", str(panel_csv), "--train-len", "5"])
    assert code == 2
    code, _, _ = run(capsys, ["forecast", "--input", str(panel_csv), "--train-len", "20",
                              "--transport-mode", "incremental"])
    assert code == 2


@pytest.mark.parametrize("what, n_objects", [("quantiles", 30), ("transports", 30),
                                              ("barycenter", 1), ("acf", 2)])
def test_export_panel(tmp_path, panel_csv, what, n_objects):
    out = tmp_path / f"{what}.csv"
    argv = ["export", "--input", str(panel_csv), "--grid-m", "200", "--what", what,
            "--format", "csv", "--out", str(out), "--K", "3"]
    assert main(argv) == 0
    curves = read_curves(out)
    # the McLeod row is omitted when its covariance is unusable
    assert len(curves) == n_objects or (what == "acf" and len(curves) == 1)
    first = out.read_bytes()
    assert main(argv) == 0 and out.read_bytes() == first


def test_bad_panel_rows(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("period,value\n1,2\n1,x\n")
    code, _, err = run(capsys, ["analyze", "--input", str(f)])
    assert code == 3 and "line 3" in err
