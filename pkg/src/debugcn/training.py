"""Deterministic train/eval loop: stratified split, minibatches, Adam with a
stepped learning-rate decay, averaged over independent runs."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor as T
from .bundle import Manifest, ManifestEntry, read_bundle
from .errors import ConfigurationError, StratificationError, ValidationError
from .graphs import (
    build_conv_2d,
    build_conv_flat,
    build_fc_bipartite,
    feature_config,
    random_pair_swaps,
)
from .model import GcnModel, GraphBatch

MODALITIES = ("fc_only", "fc_plus_flat", "fc_plus_2d")
LABEL_INDEX = {"clean": 0, "trojaned": 1}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 24
    learning_rate: float = 0.001
    decay_factor: float = 0.7
    step_size: int = 2
    split_ratio: float = 0.8
    num_runs: int = 5
    seed: int = 0
    feature_config: str = "GCN_16b"
    modality: str = "fc_only"

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ConfigurationError("split_ratio must be in (0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.num_runs < 1:
            raise ConfigurationError("epochs >= 0, batch_size and num_runs >= 1 required")
        if self.modality not in MODALITIES:
            raise ConfigurationError(f"modality must be one of {MODALITIES}")
        feature_config(self.feature_config)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def lr_for_epoch(self, epoch: int) -> float:
        return self.learning_rate * self.decay_factor ** (epoch // self.step_size)


@dataclass
class EvalResult:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "confusion": {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}}


@dataclass
class RunResult:
    seed: int
    epoch_losses: list[float]
    lrs: list[float]
    train: EvalResult
    test: EvalResult
    seconds: float

    def to_dict(self, include_timing=True) -> dict:
        out = {
            "seed": self.seed,
            "epoch_losses": self.epoch_losses,
            "lrs": self.lrs,
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
        }
        if include_timing:
            out["seconds"] = self.seconds
        return out


@dataclass
class RunReport:
    runs: list[RunResult] = field(default_factory=list)
    total_seconds: float = 0.0

    @property
    def mean_train_accuracy(self) -> float:
        return float(np.mean([r.train.accuracy for r in self.runs]))

    @property
    def mean_test_accuracy(self) -> float:
        return float(np.mean([r.test.accuracy for r in self.runs]))

    def to_dict(self, include_timing=True) -> dict:
        out = {
            "runs": [r.to_dict(include_timing) for r in self.runs],
            "averaged": {
                "train_accuracy": self.mean_train_accuracy,
                "test_accuracy": self.mean_test_accuracy,
                "epoch_losses": np.mean(
                    [r.epoch_losses for r in self.runs], axis=0).tolist()
                if self.runs and self.runs[0].epoch_losses else [],
            },
        }
        if include_timing:
            out["timing"] = {"total_seconds": self.total_seconds}
        return out

    def canonical_json(self) -> str:
        """Deterministic serialization: everything except wall-clock timing."""
        return json.dumps(self.to_dict(include_timing=False), sort_keys=True)

    def losses_csv(self) -> str:
        lines = ["run,epoch,mean_loss,lr"]
        for i, run in enumerate(self.runs):
            for e, (loss, lr) in enumerate(zip(run.epoch_losses, run.lrs)):
                lines.append(f"{i},{e},{loss!r},{lr!r}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ splitting

def split(manifest: Manifest, ratio: float, seed: int):
    """Stratified shuffle-split; per-class train count is floor(n*ratio),
    clamped so both classes appear on both sides."""
    if len(manifest) < 2:
        raise StratificationError("need at least 2 manifest entries to split")
    by_label: dict[str, list[ManifestEntry]] = {}
    for entry in manifest.entries:
        by_label.setdefault(entry.label, []).append(entry)
    if len(by_label) < 2:
        raise StratificationError("manifest contains a single class; cannot stratify")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in sorted(by_label):
        group = by_label[label]
        if len(group) < 2:
            raise StratificationError(f"class '{label}' needs >= 2 entries to stratify")
        order = rng.permutation(len(group))
        n_train = min(max(int(math.floor(len(group) * ratio)), 1), len(group) - 1)
        train.extend(group[i] for i in order[:n_train])
        test.extend(group[i] for i in order[n_train:])
    return train, test


# -------------------------------------------------------------- graph loading

def _max_workers() -> int:
    env = os.environ.get("DEBUGCN_THREADS", "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def build_graphs(entries: list[ManifestEntry], config: TrainConfig):
    """Load bundles and build (fc_graph, conv_graph|None, label) per entry.

    Pure per entry, so bundles are processed in parallel (capped by
    DEBUGCN_THREADS).
    """
    feat = feature_config(config.feature_config)
    conv_builder = {
        "fc_only": None,
        "fc_plus_flat": build_conv_flat,
        "fc_plus_2d": build_conv_2d,
    }[config.modality]

    def build_one(entry: ManifestEntry):
        b = read_bundle(entry.path)
        fc_graph = build_fc_bipartite(b.fc_weight, feat)
        conv_graph = None
        if conv_builder is not None:
            if b.conv1_weight is None:
                return entry.model_id, None, None
            conv_graph = conv_builder(b.conv1_weight)
        return entry.model_id, fc_graph, conv_graph

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        built = list(pool.map(build_one, entries))
    missing = [mid for mid, fc_graph, _ in built if fc_graph is None]
    if missing:
        raise ConfigurationError(
            f"modality '{config.modality}' needs conv1 weights, missing in: {missing}")
    labels = [LABEL_INDEX[e.label] for e in entries]
    return [(fc_g, conv_g, lab) for (_, fc_g, conv_g), lab in zip(built, labels)]


def _batches(items, indices, batch_size):
    for start in range(0, len(indices), batch_size):
        chunk = [items[i] for i in indices[start:start + batch_size]]
        fc_batch = GraphBatch([g for g, _, _ in chunk], labels=[l for _, _, l in chunk])
        conv_batch = None
        if chunk[0][1] is not None:
            conv_batch = GraphBatch([g for _, g, _ in chunk])
        yield fc_batch, conv_batch


def _evaluate_graphs(model: GcnModel, items) -> EvalResult:
    tp = tn = fp = fn = 0
    for fc_batch, conv_batch in _batches(items, np.arange(len(items)), 64):
        logits = model.forward(fc_batch, conv_batch).data
        preds = (logits[:, 1] > logits[:, 0]).astype(np.int64)
        for pred, lab in zip(preds, fc_batch.labels):
            if lab == 1:
                tp += pred == 1
                fn += pred == 0
            else:
                tn += pred == 0
                fp += pred == 1
    total = tp + tn + fp + fn
    return EvalResult(float((tp + tn) / total), int(tp), int(tn), int(fp), int(fn))


# ------------------------------------------------------------------- training

def train(manifest: Manifest, config: TrainConfig):
    """Run config.num_runs independent seeded runs; returns the final run's
    model plus the per-run and averaged report."""
    items = build_graphs(manifest.entries, config)
    fc_in = items[0][0].feature_width
    conv_in = items[0][1].feature_width if items[0][1] is not None else None
    conv_kind = None if conv_in is None else items[0][1].kind

    report = RunReport()
    started = time.perf_counter()
    model = None
    entry_items = dict(zip((e.model_id for e in manifest.entries), items))

    for run_idx in range(config.num_runs):
        run_seed = config.seed + run_idx
        run_start = time.perf_counter()
        train_entries, test_entries = split(manifest, config.split_ratio, run_seed)
        train_items = [entry_items[e.model_id] for e in train_entries]
        test_items = [entry_items[e.model_id] for e in test_entries]

        model = GcnModel.create(fc_in, conv_in, seed=run_seed,
                                feature_config=config.feature_config,
                                conv_kind=conv_kind)
        params = model.parameters()
        state = T.AdamState(params)
        rng = np.random.default_rng(run_seed)

        epoch_losses, lrs = [], []
        for epoch in range(config.epochs):
            lr = config.lr_for_epoch(epoch)
            order = rng.permutation(len(train_items))
            losses = []
            for fc_batch, conv_batch in _batches(train_items, order, config.batch_size):
                tape = T.Tape()
                logits = model.forward(fc_batch, conv_batch, tape)
                loss = T.softmax_cross_entropy(logits, fc_batch.labels, tape)
                if not np.isfinite(loss.data):
                    raise ValidationError("non-finite training loss")
                model.zero_grad()
                tape.backward(loss)
                T.adam_step(params, state, lr)
                losses.append(float(loss.data))
                tape.clear()
            epoch_losses.append(float(np.mean(losses)))
            lrs.append(lr)

        report.runs.append(RunResult(
            seed=run_seed,
            epoch_losses=epoch_losses,
            lrs=lrs,
            train=_evaluate_graphs(model, train_items),
            test=_evaluate_graphs(model, test_items),
            seconds=time.perf_counter() - run_start,
        ))

    model.is_fitted = True
    report.total_seconds = time.perf_counter() - started
    return model, report


# ----------------------------------------------------------------- evaluation

def evaluate(model: GcnModel, entries: list[ManifestEntry], config: TrainConfig) -> EvalResult:
    if not entries:
        raise ValidationError("empty evaluation set")
    items = build_graphs(entries, config)
    return _evaluate_graphs(model, items)


def permutation_trial(model: GcnModel, entries: list[ManifestEntry], config: TrainConfig,
                      k: int = 1000, seed: int = 0) -> dict:
    """Relabel nodes of every test fc graph with k random within-side swaps
    and report accuracy next to the unpermuted accuracy."""
    if not entries:
        raise ValidationError("empty evaluation set")
    items = build_graphs(entries, config)
    plain = _evaluate_graphs(model, items)
    permuted_items = [
        (random_pair_swaps(fc_g, k, seed + i), conv_g, lab)
        for i, (fc_g, conv_g, lab) in enumerate(items)
    ]
    permuted = _evaluate_graphs(model, permuted_items)
    return {
        "swaps": k,
        "unpermuted": plain.to_dict(),
        "permuted": permuted.to_dict(),
        "accuracy_drop": plain.accuracy - permuted.accuracy,
    }
