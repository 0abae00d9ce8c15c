import csv
import json

import numpy as np
import pytest

from fosls_rbno import cli

TINY = {
    "problem": "heat_conduction",
    "mesh": {"nx": 16, "ny": 16},
    "pod": {"n_pod": 8, "rank": 4},
    "counts": {"n_solve": 2, "n_train": 8, "n_val": 4, "n_test": 4, "n_probe": 3, "n_ratio_samples": 2},
    "train": {"max_iter": 15, "hidden": [8, 8]},
    "rates": {"levels": [4, 8], "k": [0]},
}

PIPELINE = ["solve", "pod", "reduce", "train", "eval", "rates", "ratios"]


def run_pipeline(tmp_path, name, seed=7):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    out = tmp_path / name
    for cmd in PIPELINE:
        assert cli.main([cmd, "--config", str(cfg), "--seed", str(seed), "--out", str(out), "--workers", "2"]) == 0
    return out


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_pipeline_is_deterministic(tmp_path):
    a = run_pipeline(tmp_path, "a")
    b = run_pipeline(tmp_path, "b")
    csvs = sorted(p.name for p in a.glob("*.csv") if p.name != "timings.csv")
    assert {"solve.csv", "eigenvalues.csv", "heldout.csv", "rb.csv", "sweep.csv", "history.csv",
            "metrics.csv", "summary.csv", "ratio_hist.csv", "rates.csv", "ratios.csv"} <= set(csvs)
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "model" / "layer0.W.rbno").read_bytes() == (b / "model" / "layer0.W.rbno").read_bytes()

    eig = np.array([float(r[1]) for r in read_csv(a / "eigenvalues.csv")[1:]])
    assert np.all(np.diff(eig) <= 0)
    rb = read_csv(a / "rb.csv")
    assert rb[0] == ["sample", "r", "rb_loss", "fe_loss", "loss_gap", "err_fe", "best_err", "quasi_opt"]
    assert all(float(r[4]) >= -1e-12 for r in rb[1:])
    cfg = json.loads((a / "config.json").read_text())
    assert cfg["seed"] == 7 and cfg["pod"]["n_pod"] == 8


def test_different_seed_changes_outputs(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    for seed, name in ((1, "x"), (2, "y")):
        assert cli.main(["solve", "--config", str(cfg), "--seed", str(seed), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "x" / "solve.csv").read_bytes() != (tmp_path / "y" / "solve.csv").read_bytes()


def test_zero_sample_solve_writes_header(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(TINY))
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--samples", "0"]) == 0
    assert read_csv(tmp_path / "o" / "solve.csv") == [["sample", "loss", "error", "ratio", "n_dofs", "n_free"]]


def test_errors_are_json(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CliError" and "nonsense" in err["message"]
    assert cli.main(["reduce", "--out", str(tmp_path / "empty")]) == 1
    assert "pod" in json.loads(capsys.readouterr().err)["message"]
    cfg.write_text(json.dumps({"mesh": {"nx": 10, "ny": 10}}))
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ValueError"


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_config_defaults():
    cfg = cli.load_config(None, 3)
    assert cfg["mesh"] == {"nx": 32, "ny": 32} and cfg["pod"]["rank"] == 32
    assert cfg["counts"]["n_train"] == 256 and cfg["seed"] == 3


def test_fit_slope():
    h = np.array([0.5, 0.25, 0.125])
    assert cli.fit_slope(h, 3 * h ** 2) == pytest.approx(2.0)
