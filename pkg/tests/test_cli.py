import csv
import json
import math

import numpy as np
import pytest

from crossgram.cli import (ExperimentConfig, StageError, UsageError, main, model_io, parse_orders, render_svg,
                           run_experiment, run_verify)
from crossgram.ltisys import LtiSystem, ModelFormatError, random_system
from crossgram.reduce import RomReport

FAST = dict(n=8, horizon=10.0)


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- argument parsing

@pytest.mark.parametrize("text, expected", [("1:5:2", (1, 3, 5)), ("2:4", (2, 3, 4)), ("7", (7,)),
                                            ("1:10:4", (1, 5, 9))])
def test_parse_orders(text, expected):
    assert parse_orders(text) == expected


@pytest.mark.parametrize("text", ["a:b", "0:4", "5:2", "1:4:0", "1:2:3:4", ""])
def test_parse_orders_rejects(text):
    with pytest.raises(UsageError):
        parse_orders(text)


def test_experiment_dimension_defaults():
    assert (ExperimentConfig("symmetric").m, ExperimentConfig("symmetric").o) == (8, 8)
    assert (ExperimentConfig("nonsquare").m, ExperimentConfig("nonsquare").o) == (4, 8)
    assert (ExperimentConfig("nonsymmetric").m, ExperimentConfig("nonsymmetric").o) == (8, 8)
    assert ExperimentConfig("verify").n == 64 and ExperimentConfig("verify").dt == 0.01


@pytest.mark.parametrize("kwargs", [dict(experiment="bogus"), dict(n=0), dict(dt=-1.0),
                                    dict(experiment="symmetric", m=2, o=3), dict(orders=(0, 3)),
                                    dict(n=4, orders=(5,)), dict(excitation="some")])
def test_config_validation(kwargs):
    with pytest.raises(UsageError):
        ExperimentConfig(**kwargs)


# ---------------------------------------------------------------- verify

def test_verify_single_state_is_exact():
    rep = run_verify(ExperimentConfig("verify", n=1, m=1, o=1))
    assert rep.discrepancy == 0.0 and rep.passed


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_verify_passes_for_any_seed(seed):
    rep = run_verify(ExperimentConfig("verify", n=16, seed=seed))
    assert rep.passed and rep.discrepancy <= 1e-10


def test_verify_exit_code(capsys):
    assert main(["verify", "--n", "8", "--horizon", "10"]) == 0
    assert "PASS" in capsys.readouterr().out


# ---------------------------------------------------------------- experiments

def test_symmetric_experiment_writes_csv_and_svg(tmp_path):
    res = run_experiment(ExperimentConfig("symmetric", out_dir=str(tmp_path), plot=True, **FAST))
    rows = read_rows(res.csv_path)
    assert len(rows) == 8 * 3
    for row in rows:
        err = float(row["rel_l2_error"])
        assert math.isfinite(err) and err >= 0 and row["stable"] in ("true", "false")
    svg = (tmp_path / "symmetric.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 3
    # full order reproduces the system
    assert all(float(r["rel_l2_error"]) <= 1e-6 for r in rows if r["order"] == "8")


def test_symmetric_bt_and_cross_gramian_agree(tmp_path):
    res = run_experiment(ExperimentConfig("symmetric", out_dir=str(tmp_path), seed=3, **FAST))
    bt = np.array(res.report.errors["balanced_truncation"])
    wx = np.array(res.report.errors["cross_gramian"])
    big = np.maximum(bt, wx) > 1e-12
    assert np.all(np.maximum(bt, wx)[big] <= 2 * np.minimum(bt, wx)[big] + 1e-12)


def test_nonsquare_method_list(tmp_path):
    res = run_experiment(ExperimentConfig("nonsquare", out_dir=str(tmp_path), orders=(2, 8), **FAST))
    methods = {r["method"] for r in read_rows(res.csv_path)}
    assert "cross_gramian" not in methods
    assert {"balanced_truncation", "nonsym_cross_gramian", "embedding_cross_gramian"} <= methods


def test_nonsymmetric_full_order(tmp_path):
    res = run_experiment(ExperimentConfig("nonsymmetric", out_dir=str(tmp_path), n=12, orders=(12,)))
    for method in res.report.methods:
        assert res.report.errors[method][0] <= 1e-6


def test_experiment_cli_exit_code_and_outputs(tmp_path, capsys):
    code = main(["experiment", "symmetric", "--n", "6", "--horizon", "10", "--orders", "1:6:1",
                 "--out", str(tmp_path), "--plot"])
    assert code == 0
    assert (tmp_path / "symmetric.csv").exists() and (tmp_path / "symmetric.svg").exists()
    assert "wrote" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["experiment", "symmetric", "--n", "4", "--orders", "1:9", "--out", str(tmp_path)]) == 2
    assert main(["experiment", "nonsymmetric", "--m", "2", "--o", "3"]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["experiment", "bogus"])
    assert info.value.code == 2


def test_numerical_failure_exits_1(tmp_path, capsys):
    model = write_json(tmp_path / "unstable.json", {"n": 1, "m": 1, "o": 1, "A": [[1.0]], "B": [[1.0]],
                                                    "C": [[1.0]]})
    assert main(["experiment", "nonsymmetric", "--model", model, "--out", str(tmp_path)]) == 1
    assert "[system]" in capsys.readouterr().err
    assert not (tmp_path / "nonsymmetric.csv").exists()


def test_stage_error_is_tagged():
    bad = LtiSystem([[0.5]], [[1.0]], [[1.0]])
    with pytest.raises(StageError, match=r"^\[system\]"):
        run_experiment(ExperimentConfig("nonsymmetric", model=bad, out_dir="."))


# ---------------------------------------------------------------- model files

def test_model_round_trip(tmp_path, rng):
    sys = random_system(7, 3, 2, seed=5)
    sys = LtiSystem(sys.a + 1e-17 * rng.standard_normal((7, 7)), sys.b / 3.0, sys.c * math.pi)
    path = str(tmp_path / "m.json")
    model_io(path, "write", sys)
    back = model_io(path, "read")
    np.testing.assert_array_equal(back.a, sys.a)
    np.testing.assert_array_equal(back.b, sys.b)
    np.testing.assert_array_equal(back.c, sys.c)


def test_model_wrong_b_rows_names_b(tmp_path):
    path = write_json(tmp_path / "bad.json", {"n": 2, "m": 1, "o": 1, "A": [[-1, 0], [0, -1]],
                                              "B": [[1.0]], "C": [[1.0, 1.0]]})
    with pytest.raises(ModelFormatError) as info:
        model_io(path, "read")
    assert info.value.field == "B" and "B" in str(info.value)


def test_model_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ModelFormatError, match="malformed"):
        model_io(str(path), "read")


def test_model_scalar_siso(tmp_path):
    path = write_json(tmp_path / "s.json", {"n": 1, "m": 1, "o": 1, "A": [[-2.0]], "B": [[1.0]], "C": [[3.0]]})
    sys = model_io(path, "read")
    assert (sys.n, sys.m, sys.o) == (1, 1, 1) and sys.a[0, 0] == -2.0


def test_model_bad_direction():
    with pytest.raises(ValueError):
        model_io("x.json", "append")


def test_save_model_then_rerun_is_identical(tmp_path):
    saved = str(tmp_path / "sys.json")
    first = run_experiment(ExperimentConfig("nonsymmetric", out_dir=str(tmp_path / "a"), save_model=saved,
                                            **FAST))
    model = model_io(saved, "read")
    second = run_experiment(ExperimentConfig("nonsymmetric", out_dir=str(tmp_path / "b"), model=model,
                                             **FAST))
    assert open(first.csv_path).read() == open(second.csv_path).read()


def test_symmetrizer_file(tmp_path, capsys):
    j = write_json(tmp_path / "j.json", {"J": np.eye(6).tolist()})
    code = main(["experiment", "nonsquare", "--n", "6", "--horizon", "10", "--symmetrizer", j,
                 "--out", str(tmp_path)])
    assert code == 0
    assert "embedding_cross_gramian" in (tmp_path / "nonsquare.csv").read_text()


# ---------------------------------------------------------------- plot

def test_svg_escapes_and_skips_failures():
    rep = RomReport(orders=[1, 2, 3], errors={"balanced_truncation": [0.1, math.nan, 1e-9]},
                    stable={"balanced_truncation": [True, None, True]})
    svg = render_svg(rep, title="a < b & c")
    assert "a &lt; b &amp; c" in svg and "nan" not in svg.lower()
