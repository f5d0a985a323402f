import json

import numpy as np
import pandas as pd
import pytest

from drcatt.cli import EXIT_FATAL, EXIT_OK, main
from drcatt.simulate import SimConfig, rep_rng, simulate_panel


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "panel.csv"
    panel = simulate_panel(SimConfig(n=1200, T=4), rep_rng(55, 0))
    panel.to_frame().to_csv(path, index=False)
    return str(path)


@pytest.fixture(scope="module")
def discrete_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "dpanel.csv"
    panel = simulate_panel(SimConfig(n=2000, T=4, covariate_kind="discrete"),
                           rep_rng(56, 0))
    panel.to_frame().to_csv(path, index=False)
    return str(path)


def _estimate_args(panel_csv, out, extra=()):
    return ["estimate", "--input", panel_csv, "--g-col", "g",
            "--output-dir", str(out), "--cells", "2:2",
            "--boot-reps", "60", "--seed", "1", *extra]


def test_estimate_schema_and_exit(panel_csv, tmp_path):
    out = tmp_path / "run1"
    assert main(_estimate_args(panel_csv, out)) == EXIT_OK
    curve = pd.read_csv(out / "curve.csv")
    band = pd.read_csv(out / "band.csv")
    assert list(curve.columns) == ["g", "t", "z", "estimate", "se", "n_eff"]
    assert list(band.columns) == ["g", "t", "z", "estimate", "se", "lower",
                                  "upper", "critical", "method"]
    assert (band["method"] == "bootstrap").all()
    assert np.all(band["lower"] <= band["estimate"])
    assert np.all(band["estimate"] <= band["upper"])
    side = json.loads((out / "run.json").read_text())
    assert side["band"] == "bootstrap" and side["failed_cells"] == []
    assert len(side["bandwidths"]) == 1


def test_estimate_rerun_byte_identical(panel_csv, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(_estimate_args(panel_csv, out1)) == EXIT_OK
    assert main(_estimate_args(panel_csv, out2)) == EXIT_OK
    for name in ("curve.csv", "band.csv", "run.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_overwrite_required(panel_csv, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(_estimate_args(panel_csv, out)) == EXIT_OK
    assert main(_estimate_args(panel_csv, out)) == EXIT_FATAL
    assert "--overwrite" in capsys.readouterr().err
    assert main(_estimate_args(panel_csv, out, ["--overwrite"])) == EXIT_OK


def test_invalid_alpha_names_alpha(panel_csv, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(_estimate_args(panel_csv, out, ["--alpha", "1.5"]))
    assert code == EXIT_FATAL
    assert "alpha" in capsys.readouterr().err


def test_missing_input_fatal(tmp_path, capsys):
    code = main(["estimate", "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_FATAL
    assert "error:" in capsys.readouterr().err


def test_config_file_precedence(panel_csv, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "path": panel_csv, "g_col": "g", "cells": "2:2",
        "boot_reps": 60, "seed": 99, "output_dir": str(tmp_path / "ignored"),
    }))
    out = tmp_path / "cfgrun"
    # flags override the file: seed 1 and a different output dir
    assert main(["estimate", "--config", str(cfg_path),
                 "--seed", "1", "--output-dir", str(out)]) == EXIT_OK
    side = json.loads((out / "run.json").read_text())
    assert side["seed"] == 1
    # flag-free values come from the file
    assert len(side["cells"]) == 1


def test_config_unknown_key_fatal(panel_csv, tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"bandwith": 0.2}))
    code = main(["estimate", "--config", str(cfg_path),
                 "--input", panel_csv, "--g-col", "g",
                 "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_FATAL
    assert "bandwith" in capsys.readouterr().err


def test_estimate_analytic_band(panel_csv, tmp_path):
    out = tmp_path / "an"
    code = main(_estimate_args(panel_csv, out,
                               ["--band", "analytic", "--bandwidth", "0.15",
                                "--grid-min", "-1", "--grid-max", "1",
                                "--grid-points", "21"]))
    assert code == EXIT_OK
    band = pd.read_csv(out / "band.csv")
    assert (band["method"] == "analytic").all()
    assert band["critical"].nunique() == 1


def test_estimate_discrete_schema(discrete_csv, tmp_path):
    out = tmp_path / "disc"
    code = main(["estimate", "--input", discrete_csv, "--g-col", "g",
                 "--discrete", "--cells", "2:2", "--boot-reps", "80",
                 "--seed", "2", "--output-dir", str(out)])
    assert code == EXIT_OK
    band = pd.read_csv(out / "band.csv")
    assert (band["method"] == "discrete-boot").all()
    assert sorted(band["z"]) == [-1.0, 0.0, 1.0]


def test_bandwidth_subcommand(panel_csv, tmp_path):
    out = tmp_path / "bw"
    code = main(["bandwidth", "--input", panel_csv, "--g-col", "g",
                 "--cells", "2:2,2:3", "--output-dir", str(out)])
    assert code == EXIT_OK
    df = pd.read_csv(out / "bandwidth.csv")
    assert {"g", "t", "h1", "h2"}.issubset(df.columns)
    assert len(df) == 2
    side = json.loads((out / "bandwidth.json").read_text())
    assert side["h1_global"] == pytest.approx(df["h1"].min())
    assert side["h2_global"] == pytest.approx(df["h2"].min())


def test_simulate_preset_and_reps(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--preset", "appendix-d", "--n", "400",
                 "--reps", "2", "--boot-reps", "60", "--seed", "5",
                 "--output-dir", str(out)])
    assert code == EXIT_OK
    df = pd.read_csv(out / "mc_report.csv")
    assert list(df.columns) == ["g", "t", "z", "bias", "rmse", "pwcp",
                                "ucp", "length"]
    assert len(df) == 3
    side = json.loads((out / "mc_report.json").read_text())
    assert side["reps"] == 2 and side["band"] == "discrete-boot"


def test_simulate_unknown_preset(tmp_path, capsys):
    code = main(["simulate", "--preset", "appendix-z",
                 "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_FATAL
    err = capsys.readouterr().err
    assert "appendix-d" in err


def test_simulate_thread_invariance(tmp_path):
    args = ["simulate", "--preset", "appendix-d", "--n", "400",
            "--reps", "3", "--boot-reps", "60", "--seed", "5"]
    out1, out2 = tmp_path / "t1", tmp_path / "t2"
    assert main(args + ["--threads", "1", "--output-dir", str(out1)]) == EXIT_OK
    assert main(args + ["--threads", "2", "--output-dir", str(out2)]) == EXIT_OK
    assert (out1 / "mc_report.csv").read_bytes() == \
        (out2 / "mc_report.csv").read_bytes()
