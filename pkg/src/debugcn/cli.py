"""Command-line surface for the detection pipeline.

Exit codes: 0 success, 1 validation/data error, 2 usage error. Every error
path prints one machine-greppable line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import synth as synth_mod
from . import training
from .bundle import load_manifest, read_bundle, summary_stats
from .errors import DebugcnError
from .graphs import build_conv_2d, build_conv_flat, build_fc_bipartite, feature_config
from .model import GcnModel, predict


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debugcn",
                                     description="Static-weight trojan detection for CNNs")
    sub = parser.add_subparsers(dest="command", required=True)

    bundle_p = sub.add_parser("bundle", help="bundle file utilities")
    bundle_sub = bundle_p.add_subparsers(dest="bundle_command", required=True)
    validate_p = bundle_sub.add_parser("validate", help="parse and validate a bundle file")
    validate_p.add_argument("path")

    synth_p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    synth_p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    synth_p.add_argument("--out", required=True, help="output directory")

    train_p = sub.add_parser("train", help="train the graph classifier")
    train_p.add_argument("--manifest", required=True)
    train_p.add_argument("--config", required=True, help="TrainConfig JSON file")
    train_p.add_argument("--out", required=True, help="model checkpoint path")

    eval_p = sub.add_parser("eval", help="evaluate a trained model on a manifest")
    eval_p.add_argument("--model", required=True)
    eval_p.add_argument("--manifest", required=True)

    predict_p = sub.add_parser("predict", help="classify one bundle")
    predict_p.add_argument("--model", required=True)
    predict_p.add_argument("--bundle", required=True)

    permute_p = sub.add_parser("permute", help="node-swap robustness trial")
    permute_p.add_argument("--model", required=True)
    permute_p.add_argument("--manifest", required=True)
    permute_p.add_argument("--swaps", type=int, default=1000)
    permute_p.add_argument("--seed", type=int, default=0)

    stats_p = sub.add_parser("stats", help="per-layer weight statistics of a bundle")
    stats_p.add_argument("--bundle", required=True)

    return parser


def _config_for_model(model: GcnModel) -> training.TrainConfig:
    modality = {None: "fc_only", "conv_flat": "fc_plus_flat",
                "conv_2d": "fc_plus_2d"}[model.conv_kind]
    return training.TrainConfig(feature_config=model.feature_config, modality=modality)


def _graphs_for_bundle(model: GcnModel, bundle_path):
    b = read_bundle(bundle_path)
    fc_graph = build_fc_bipartite(b.fc_weight, feature_config(model.feature_config))
    conv_graph = None
    if model.conv_kind is not None:
        if b.conv1_weight is None:
            raise DebugcnError(f"model needs conv1 weights but {bundle_path} has none")
        builder = build_conv_flat if model.conv_kind == "conv_flat" else build_conv_2d
        conv_graph = builder(b.conv1_weight)
    return b, fc_graph, conv_graph


def run(argv) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "bundle":
            b = read_bundle(args.path)
            conv = "x".join(map(str, b.conv1_weight.shape)) if b.conv1_weight is not None else "-"
            print(f"ok\t{b.model_id}\tfc={b.fc_weight.shape[0]}x{b.fc_weight.shape[1]}"
                  f"\tconv={conv}")

        elif args.command == "synth":
            spec = synth_mod.SynthSpec.from_json(Path(args.spec).read_text("utf-8"))
            manifest = synth_mod.generate(spec, args.out)
            print(f"wrote {len(manifest)} bundles to {args.out}")

        elif args.command == "train":
            config = training.TrainConfig.from_json(Path(args.config).read_text("utf-8"))
            manifest = load_manifest(args.manifest)
            model, report = training.train(manifest, config)
            model.save(args.out)
            out = Path(args.out)
            out.with_suffix(out.suffix + ".report.json").write_text(
                report.canonical_json() + "\n", "utf-8")
            out.with_suffix(out.suffix + ".losses.csv").write_text(report.losses_csv(), "utf-8")
            print(report.canonical_json())
            print(f"total_seconds={report.total_seconds:.2f}", file=sys.stderr)

        elif args.command == "eval":
            model = GcnModel.load(args.model)
            manifest = load_manifest(args.manifest)
            result = training.evaluate(model, manifest.entries, _config_for_model(model))
            print(json.dumps(result.to_dict(), sort_keys=True))

        elif args.command == "predict":
            model = GcnModel.load(args.model)
            b, fc_graph, conv_graph = _graphs_for_bundle(model, args.bundle)
            result = predict(model, fc_graph, conv_graph)
            print(f"{b.model_id}\t{result['label']}\t{result['probabilities'][1]:.6f}")

        elif args.command == "permute":
            model = GcnModel.load(args.model)
            manifest = load_manifest(args.manifest)
            result = training.permutation_trial(
                model, manifest.entries, _config_for_model(model),
                k=args.swaps, seed=args.seed)
            print(json.dumps(result, sort_keys=True))

        elif args.command == "stats":
            print(json.dumps(summary_stats(read_bundle(args.bundle)), sort_keys=True))

    except DebugcnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    entry()
