import json

import numpy as np
import pytest

from debugcn import cli
from debugcn.bundle import WeightBundle, write_bundle


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_dataset):
    """One small trained checkpoint shared across CLI tests."""
    out_dir, _ = tiny_dataset
    work = tmp_path_factory.mktemp("cli")
    cfg_path = work / "config.json"
    cfg_path.write_text(json.dumps({
        "epochs": 3, "batch_size": 8, "num_runs": 1,
        "feature_config": "GCN_5", "modality": "fc_only"}), "utf-8")
    model_path = work / "model.dwb"
    rc = cli.run(["train", "--manifest", str(out_dir / "manifest.json"),
                  "--config", str(cfg_path), "--out", str(model_path)])
    assert rc == 0
    return work, model_path, out_dir


def test_bundle_validate_ok(capsys, tiny_dataset):
    out_dir, manifest = tiny_dataset
    rc = cli.run(["bundle", "validate", str(manifest.entries[0].path)])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("ok\t") and "fc=4x24" in line and "conv=4x1x3x3" in line


def test_bundle_validate_truncated(capsys, tmp_path):
    path = tmp_path / "t.dwb"
    write_bundle(WeightBundle("t", np.zeros((2, 2), np.float32)), path)
    path.write_bytes(path.read_bytes()[:-3])
    rc = cli.run(["bundle", "validate", str(path)])
    assert rc == 1
    assert "truncated payload" in capsys.readouterr().err


def test_bundle_validate_missing_file(capsys, tmp_path):
    rc = cli.run(["bundle", "validate", str(tmp_path / "nope.dwb")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_flag_is_usage_error(capsys):
    assert cli.run(["train", "--wat"]) == 2
    assert cli.run(["frobnicate"]) == 2


def test_synth_command(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"num_clean": 2, "num_trojaned": 2,
                                "fc_shape": [3, 8], "conv_shape": [2, 1, 3, 3]}), "utf-8")
    rc = cli.run(["synth", "--spec", str(spec), "--out", str(tmp_path / "data")])
    assert rc == 0
    assert "wrote 4 bundles" in capsys.readouterr().out
    assert (tmp_path / "data" / "manifest.json").exists()


def test_train_outputs(capsys, trained):
    work, model_path, _ = trained
    assert model_path.exists()
    report = json.loads(model_path.with_suffix(".dwb.report.json").read_text("utf-8"))
    assert "averaged" in report and "runs" in report
    csv = model_path.with_suffix(".dwb.losses.csv").read_text("utf-8")
    assert csv.startswith("run,epoch,mean_loss,lr\n")


def test_eval_command(capsys, trained):
    _, model_path, out_dir = trained
    rc = cli.run(["eval", "--model", str(model_path),
                  "--manifest", str(out_dir / "manifest.json")])
    assert rc == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result) == {"accuracy", "confusion"}
    assert sum(result["confusion"].values()) == 16


def test_eval_stdout_deterministic(capsys, trained):
    _, model_path, out_dir = trained
    args = ["eval", "--model", str(model_path), "--manifest", str(out_dir / "manifest.json")]
    assert cli.run(args) == 0
    first = capsys.readouterr().out
    assert cli.run(args) == 0
    assert capsys.readouterr().out == first


def test_predict_line_format(capsys, trained, tiny_dataset):
    _, model_path, _ = trained
    _, manifest = tiny_dataset
    rc = cli.run(["predict", "--model", str(model_path),
                  "--bundle", str(manifest.entries[0].path)])
    assert rc == 0
    model_id, label, p = capsys.readouterr().out.strip().split("\t")
    assert label in ("clean", "trojaned")
    assert 0.0 <= float(p) <= 1.0


def test_permute_zero_swaps_matches_eval(capsys, trained):
    _, model_path, out_dir = trained
    rc = cli.run(["eval", "--model", str(model_path),
                  "--manifest", str(out_dir / "manifest.json")])
    assert rc == 0
    plain = json.loads(capsys.readouterr().out)
    rc = cli.run(["permute", "--model", str(model_path),
                  "--manifest", str(out_dir / "manifest.json"), "--swaps", "0"])
    assert rc == 0
    trial = json.loads(capsys.readouterr().out)
    assert trial["swaps"] == 0
    assert trial["unpermuted"] == plain
    assert trial["permuted"] == plain


def test_stats_command(capsys, tmp_path):
    path = tmp_path / "s.dwb"
    write_bundle(WeightBundle("s", np.array([[0, 1, 2, 3, 100]], np.float32)), path)
    rc = cli.run(["stats", "--bundle", str(path)])
    assert rc == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["fc.weight"]["mean"] == 21.2
