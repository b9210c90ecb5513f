"""debugcn: detect backdoored CNNs from their static weights.

Pipeline: weight bundles -> layer graphs with engineered node features ->
a small GraphConv classifier trained as a clean-vs-trojaned detector.
"""

from .bundle import Manifest, WeightBundle, load_manifest, read_bundle, write_bundle
from .graphs import (
    FeatureConfig,
    LayerGraph,
    build_conv_2d,
    build_conv_flat,
    build_fc_bipartite,
    compute_node_features,
    feature_config,
)
from .model import GcnModel, GraphBatch, predict
from .synth import SynthSpec, generate
from .training import RunReport, TrainConfig, evaluate, permutation_trial, split, train

__all__ = [
    "FeatureConfig",
    "GcnModel",
    "GraphBatch",
    "LayerGraph",
    "Manifest",
    "RunReport",
    "SynthSpec",
    "TrainConfig",
    "WeightBundle",
    "build_conv_2d",
    "build_conv_flat",
    "build_fc_bipartite",
    "compute_node_features",
    "evaluate",
    "feature_config",
    "generate",
    "load_manifest",
    "permutation_trial",
    "predict",
    "read_bundle",
    "split",
    "train",
    "write_bundle",
]
