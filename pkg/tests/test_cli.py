import os

import numpy as np
import pytest

from handloop.cli import read_trace_csv, run, trace_csv
from handloop.config import ConfigError, RunConfig

SMALL = ["--set", "resolution=16", "--set", "train_count=30", "--set", "test_count=8",
         "--set", "epochs_predictor=2", "--set", "epochs_synthesizer=1",
         "--set", "epochs_updater=2", "--set", "baseline_frames=3",
         "--set", "baseline_max_iterations=2"]


def tree(root):
    out = {}
    for base, _, files in os.walk(root):
        for name in files:
            path = os.path.join(base, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_grad_check_exits_zero(capsys):
    assert run(["grad-check", "-q"]) == 0
    assert "max relative error" in capsys.readouterr().out


def test_unknown_config_key_is_a_config_error(tmp_path, capsys):
    code = run(["gen-data", "-q", "--out", str(tmp_path / "d.hpds"), "--set", "foo=1"])
    assert code == 2
    assert "foo" in capsys.readouterr().err


def test_bad_config_file_line(tmp_path, capsys):
    cfg = tmp_path / "run.config"
    cfg.write_text("seed = 1\nthis line has no equals\n")
    assert run(["gen-data", "-q", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2


def test_missing_input_file(tmp_path, capsys):
    code = run(["train-predictor", "-q", "--data", str(tmp_path / "absent.hpds"),
                "--out", str(tmp_path)])
    assert code == 3
    assert "absent.hpds" in capsys.readouterr().err


def test_corrupt_dataset_is_an_input_error(tmp_path):
    bad = tmp_path / "bad.hpds"
    bad.write_bytes(b"not a dataset")
    assert run(["train-predictor", "-q", "--data", str(bad), "--out", str(tmp_path)]) == 3


def test_gen_data_round_trip(tmp_path):
    from handloop.synthdata import generate_dataset, read_dataset
    path = tmp_path / "d.hpds"
    assert run(["gen-data", "-q", "--count", "5", "--res", "16", "--seed", "9",
                "--out", str(path)]) == 0
    assert read_dataset(path).equals(generate_dataset(5, 16, seed=9))


def test_trace_csv_round_trip(rng):
    trace = rng.standard_normal((3, 4, 42))
    path_text = trace_csv(trace)
    assert path_text.splitlines()[0] == "frame_index,iteration,joint_index,x,y,z"
    assert len(path_text.splitlines()) == 1 + 3 * 4 * 14


def test_trace_csv_reader(tmp_path, rng):
    trace = rng.standard_normal((2, 3, 42))
    p = tmp_path / "t.csv"
    p.write_text(trace_csv(trace))
    np.testing.assert_array_equal(read_trace_csv(p), trace)


def test_run_config_rejects_unknown_keys():
    cfg = RunConfig()
    with pytest.raises(ConfigError, match="foo"):
        cfg.set("foo", "1")
    cfg.set("iterations", "4")
    assert cfg["iterations"] == 4
    again = RunConfig.parse(cfg.dump())
    assert again.dump() == cfg.dump()


def test_pipeline_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["pipeline", "-q", "--seed", "4", "--out", str(a)] + SMALL) == 0
    assert run(["pipeline", "-q", "--seed", "4", "--out", str(b)] + SMALL) == 0
    ta, tb = tree(a), tree(b)
    for name in ("data/train.hpds", "models/updater.hpnn", "traces.csv", "report/curve.csv",
                 "report/curve.svg", "comparison.csv"):
        assert name in ta
    assert ta.keys() == tb.keys()
    differing = [k for k in ta if ta[k] != tb[k]]
    assert differing == []
