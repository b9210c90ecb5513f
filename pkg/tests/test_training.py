import json

import numpy as np
import pytest

from debugcn import training as TR
from debugcn.bundle import Manifest, ManifestEntry, load_manifest
from debugcn.errors import ConfigurationError, StratificationError, ValidationError


def _manifest(counts):
    entries = []
    for label, n in counts.items():
        entries.extend(ManifestEntry(path=f"/nonexistent/{label}-{i}.dwb", label=label,
                                     model_id=f"{label}-{i}", arch_tag="t")
                       for i in range(n))
    return Manifest(entries=entries)


# -------------------------------------------------------------------- config

def test_config_defaults():
    cfg = TR.TrainConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.learning_rate) == (20, 24, 0.001)
    assert (cfg.decay_factor, cfg.step_size, cfg.split_ratio) == (0.7, 2, 0.8)
    assert (cfg.num_runs, cfg.feature_config, cfg.modality) == (5, "GCN_16b", "fc_only")


def test_lr_schedule_exact():
    cfg = TR.TrainConfig()
    expected = [0.001 * 0.7 ** (e // 2) for e in range(20)]
    assert [cfg.lr_for_epoch(e) for e in range(20)] == expected
    assert cfg.lr_for_epoch(0) == cfg.lr_for_epoch(1) == 0.001
    assert abs(cfg.lr_for_epoch(2) - 0.0007) < 1e-12
    assert abs(cfg.lr_for_epoch(19) - 0.001 * 0.7 ** 9) < 1e-15


def test_config_from_json_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown config keys"):
        TR.TrainConfig.from_json(json.dumps({"epochs": 2, "momentum": 0.9}))
    cfg = TR.TrainConfig.from_json(json.dumps({"epochs": 2, "num_runs": 1}))
    assert cfg.epochs == 2 and cfg.num_runs == 1


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TR.TrainConfig(split_ratio=1.0)
    with pytest.raises(ConfigurationError):
        TR.TrainConfig(modality="fc_plus_both")
    with pytest.raises(ConfigurationError):
        TR.TrainConfig(num_runs=0)


# --------------------------------------------------------------------- split

def test_split_arithmetic_examples():
    for counts, want in [
        ({"clean": 335, "trojaned": 417}, (268 + 333, 151)),
        ({"clean": 400, "trojaned": 400}, (640, 160)),
        ({"clean": 150, "trojaned": 150}, (240, 60)),
        ({"clean": 5, "trojaned": 5}, (8, 2)),
    ]:
        train, test = TR.split(_manifest(counts), 0.8, seed=0)
        assert (len(train), len(test)) == want
        assert len(train) + len(test) == sum(counts.values())


def test_split_is_stratified_and_disjoint():
    train, test = TR.split(_manifest({"clean": 10, "trojaned": 30}), 0.8, seed=1)
    assert sum(e.label == "clean" for e in train) == 8
    assert sum(e.label == "trojaned" for e in train) == 24
    ids = {e.model_id for e in train} | {e.model_id for e in test}
    assert len(ids) == 40


def test_split_clamps_tiny_classes():
    train, test = TR.split(_manifest({"clean": 2, "trojaned": 2}), 0.8, seed=0)
    # floor(2*0.8)=1 per class; both sides keep both classes
    assert {e.label for e in train} == {e.label for e in test} == {"clean", "trojaned"}


def test_split_seed_determinism():
    m = _manifest({"clean": 20, "trojaned": 20})
    a = TR.split(m, 0.8, seed=5)
    b = TR.split(m, 0.8, seed=5)
    c = TR.split(m, 0.8, seed=6)
    assert [e.model_id for e in a[0]] == [e.model_id for e in b[0]]
    assert [e.model_id for e in a[0]] != [e.model_id for e in c[0]]


def test_split_errors():
    with pytest.raises(StratificationError, match="single class"):
        TR.split(_manifest({"clean": 4}), 0.8, seed=0)
    with pytest.raises(StratificationError):
        TR.split(_manifest({"clean": 1, "trojaned": 5}), 0.8, seed=0)


# ------------------------------------------------------------------ training

def _tiny_config(**kw):
    base = dict(epochs=4, batch_size=8, num_runs=2, seed=0,
                feature_config="GCN_5", modality="fc_only")
    base.update(kw)
    return TR.TrainConfig(**base)


def test_train_deterministic_reports(tiny_dataset):
    _, manifest = tiny_dataset
    cfg = _tiny_config()
    _, report1 = TR.train(manifest, cfg)
    _, report2 = TR.train(manifest, cfg)
    assert report1.canonical_json() == report2.canonical_json()
    # wall-clock differs but is excluded from the canonical form
    assert "seconds" not in report1.canonical_json()


def test_train_loss_decreases(tiny_dataset):
    _, manifest = tiny_dataset
    _, report = TR.train(manifest, _tiny_config(epochs=10, num_runs=1))
    losses = report.runs[0].epoch_losses
    assert losses[-1] < losses[0]
    assert report.runs[0].lrs[0] == 0.001


def test_train_zero_epochs(tiny_dataset):
    _, manifest = tiny_dataset
    model, report = TR.train(manifest, _tiny_config(epochs=0, num_runs=1))
    assert model.is_fitted
    assert report.runs[0].epoch_losses == []
    assert 0.0 <= report.mean_test_accuracy <= 1.0


def test_train_seed_changes_results(tiny_dataset):
    _, manifest = tiny_dataset
    _, r0 = TR.train(manifest, _tiny_config(num_runs=1, seed=0))
    _, r1 = TR.train(manifest, _tiny_config(num_runs=1, seed=100))
    assert r0.canonical_json() != r1.canonical_json()


def test_run_seeds_are_consecutive(tiny_dataset):
    _, manifest = tiny_dataset
    _, report = TR.train(manifest, _tiny_config(num_runs=3, seed=40))
    assert [r.seed for r in report.runs] == [40, 41, 42]


def test_losses_csv_shape(tiny_dataset):
    _, manifest = tiny_dataset
    _, report = TR.train(manifest, _tiny_config(epochs=3, num_runs=2))
    lines = report.losses_csv().strip().split("\n")
    assert lines[0] == "run,epoch,mean_loss,lr"
    assert len(lines) == 1 + 2 * 3


def test_evaluate_confusion_totals(tiny_dataset):
    _, manifest = tiny_dataset
    cfg = _tiny_config(num_runs=1)
    model, _ = TR.train(manifest, cfg)
    res = TR.evaluate(model, manifest.entries, cfg)
    assert res.total == len(manifest)
    assert res.accuracy == (res.tp + res.tn) / res.total


def test_permutation_trial_zero_swaps_is_identity(tiny_dataset):
    _, manifest = tiny_dataset
    cfg = _tiny_config(num_runs=1)
    model, _ = TR.train(manifest, cfg)
    out = TR.permutation_trial(model, manifest.entries, cfg, k=0, seed=0)
    assert out["unpermuted"] == out["permuted"]
    assert out["accuracy_drop"] == 0.0


def test_missing_conv_weights_named_in_error(tmp_path, tiny_dataset):
    import debugcn.bundle as B

    _, manifest = tiny_dataset
    # strip conv weights from one bundle
    victim = manifest.entries[0]
    b = B.read_bundle(victim.path)
    b.conv1_weight = None
    stripped = tmp_path / "stripped.dwb"
    B.write_bundle(b, stripped)
    entries = [B.ManifestEntry(path=stripped, label=victim.label,
                               model_id="stripped", arch_tag="t")] + list(manifest.entries[1:])
    cfg = _tiny_config(modality="fc_plus_flat")
    with pytest.raises(ConfigurationError, match="stripped"):
        TR.build_graphs(entries, cfg)


def test_dual_branch_training_works(tiny_dataset):
    _, manifest = tiny_dataset
    cfg = _tiny_config(epochs=2, num_runs=1, modality="fc_plus_flat")
    model, report = TR.train(manifest, cfg)
    assert model.dual_branch
    assert len(report.runs) == 1
