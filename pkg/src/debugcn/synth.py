"""Synthetic clean/trojaned weight-bundle generator.

Clean bundles draw every weight i.i.d. Normal(0, clean_scale^2). Trojaned
bundles start from the same recipe, then a seeded random subset of left-node
columns of the FC matrix (and of output filters of the conv tensor) is
redrawn at the wider trojan_tail_scale, so the trojan signal is both
distributional (heavier min/max tails) and relational (localized to a few
nodes)."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bundle import Manifest, ManifestEntry, WeightBundle, save_manifest, write_bundle
from .errors import ConfigurationError


@dataclass
class SynthSpec:
    num_clean: int = 100
    num_trojaned: int = 100
    fc_shape: tuple[int, int] = (10, 512)
    conv_shape: tuple[int, int, int, int] = (16, 1, 5, 5)
    clean_scale: float = 0.05
    trojan_tail_scale: float = 0.25
    trojan_column_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.fc_shape = tuple(self.fc_shape)
        self.conv_shape = tuple(self.conv_shape)
        if not self.trojan_tail_scale > self.clean_scale > 0:
            raise ConfigurationError("need trojan_tail_scale > clean_scale > 0")
        if not 0 < self.trojan_column_fraction <= 1:
            raise ConfigurationError("trojan_column_fraction must be in (0, 1]")
        if self.num_clean < 0 or self.num_trojaned < 0:
            raise ConfigurationError("bundle counts must be non-negative")

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**data)


def _subset_size(total: int, fraction: float) -> int:
    return min(total, max(1, round(total * fraction)))


def _make_bundle(spec: SynthSpec, label: str, index: int,
                 rng: np.random.Generator) -> WeightBundle:
    fc = rng.normal(0.0, spec.clean_scale, spec.fc_shape)
    conv = rng.normal(0.0, spec.clean_scale, spec.conv_shape)
    if label == "trojaned":
        r, c = spec.fc_shape
        cols = rng.choice(c, size=_subset_size(c, spec.trojan_column_fraction), replace=False)
        fc[:, cols] = rng.normal(0.0, spec.trojan_tail_scale, (r, cols.size))
        f_out = spec.conv_shape[0]
        filts = rng.choice(f_out, size=_subset_size(f_out, spec.trojan_column_fraction),
                           replace=False)
        conv[filts] = rng.normal(0.0, spec.trojan_tail_scale,
                                 (filts.size,) + spec.conv_shape[1:])
    return WeightBundle(
        model_id=f"{label}-{index:04d}",
        fc_weight=fc.astype(np.float32),
        conv1_weight=conv.astype(np.float32),
        arch_tag="synthetic",
    )


def generate(spec: SynthSpec, out_dir) -> Manifest:
    """Write bundle files plus manifest.json into out_dir; deterministic per seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [("clean", i) for i in range(spec.num_clean)]
    jobs += [("trojaned", i) for i in range(spec.num_trojaned)]
    seeds = np.random.SeedSequence(spec.seed).spawn(len(jobs))
    entries = []
    for (label, index), seed_seq in zip(jobs, seeds):
        bundle = _make_bundle(spec, label, index, np.random.default_rng(seed_seq))
        path = out_dir / f"{bundle.model_id}.dwb"
        write_bundle(bundle, path)
        entries.append(ManifestEntry(path, label, bundle.model_id, bundle.arch_tag))
    # manifest rows carry bare filenames so the directory relocates cleanly
    save_manifest(
        Manifest([ManifestEntry(Path(e.path.name), e.label, e.model_id, e.arch_tag)
                  for e in entries]),
        out_dir / "manifest.json")
    return Manifest(entries)
