"""One- and two-branch GraphConv classifier.

Each branch is three GraphConv layers (input -> 64 -> 64 -> 64) with ReLU,
followed by per-graph mean pooling; the dual-branch model concatenates the
two pooled vectors before a single linear head with 2 logits.

A GraphConv layer combines additively:
    out[v] = B_self^T h_v + sum_{u in N(v)} e_uv (W_neighbor^T h_u) + bias
Every undirected edge contributes in both directions; there is no implicit
self-loop beyond the B_self term.
"""

from __future__ import annotations

import numpy as np

from . import bundle as bundle_io
from . import tensor as T
from .errors import ConfigurationError, ShapeError, StateError
from .graphs import FEATURE_CONFIGS, KIND_CONV_2D, KIND_CONV_FLAT, LayerGraph

HIDDEN = 64
NUM_CLASSES = 2

_FEATURE_IDS = ["GCN_5", "GCN_7", "GCN_16a", "GCN_16b", "GCN_18"]
_CONV_KIND_IDS = {None: 0, KIND_CONV_FLAT: 1, KIND_CONV_2D: 2}
_CONV_KIND_NAMES = {v: k for k, v in _CONV_KIND_IDS.items()}


def _glorot(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> T.Tensor:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return T.Tensor(rng.uniform(-limit, limit, (d_in, d_out)), requires_grad=True, dtype=dtype)


class GraphConvLayer:
    """Trainable self/neighbor transforms plus one shared bias."""

    def __init__(self, w_neighbor: T.Tensor, b_self: T.Tensor, bias: T.Tensor):
        if w_neighbor.shape != b_self.shape or bias.shape != (w_neighbor.shape[1],):
            raise ShapeError("GraphConvLayer: W_neighbor, B_self and bias widths must agree")
        self.w_neighbor = w_neighbor
        self.b_self = b_self
        self.bias = bias

    @classmethod
    def create(cls, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        return cls(
            _glorot(rng, d_in, d_out, dtype),
            _glorot(rng, d_in, d_out, dtype),
            T.Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype),
        )

    def parameters(self):
        return [self.w_neighbor, self.b_self, self.bias]

    def forward(self, h: T.Tensor, src, dst, edge_weights, num_nodes: int,
                tape: T.Tape | None) -> T.Tensor:
        if h.shape[1] != self.w_neighbor.shape[0]:
            raise ShapeError(
                f"graph_conv: feature width {h.shape[1]} != layer input "
                f"width {self.w_neighbor.shape[0]}")
        return T.graph_conv_combine(h, self.w_neighbor, self.b_self, self.bias,
                                    src, dst, edge_weights, num_nodes, tape)


def graph_conv_forward(layer: GraphConvLayer, node_feats: T.Tensor, edges,
                       edge_weights, tape: T.Tape | None = None) -> T.Tensor:
    """Single-graph convenience wrapper over an undirected edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.asarray(edge_weights, dtype=np.float32)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    ww = np.concatenate([w, w])
    return layer.forward(node_feats, src, dst, ww, node_feats.shape[0], tape)


class GraphBatch:
    """Disjoint union of LayerGraphs with offset edges and per-node graph ids."""

    def __init__(self, graphs: list[LayerGraph], labels=None, dtype=np.float32):
        if not graphs:
            raise ConfigurationError("empty graph batch")
        widths = {g.feature_width for g in graphs}
        if len(widths) != 1:
            raise ShapeError(f"batch mixes feature widths {sorted(widths)}")
        feats, srcs, dsts, ws, gids = [], [], [], [], []
        offset = 0
        for gid, g in enumerate(graphs):
            feats.append(g.node_features)
            # per-graph lists are dst-sorted and offsets grow monotonically,
            # so the batch stays globally sorted for scatter locality
            src, dst, w = g.directed_edges()
            srcs.append(src + offset)
            dsts.append(dst + offset)
            ws.append(w)
            gids.append(np.full(g.num_nodes, gid, dtype=np.int64))
            offset += g.num_nodes
        self.num_graphs = len(graphs)
        self.num_nodes = offset
        self.features = np.concatenate(feats).astype(dtype)
        self.src = np.ascontiguousarray(np.concatenate(srcs))
        self.dst = np.ascontiguousarray(np.concatenate(dsts))
        self.edge_weights = np.ascontiguousarray(np.concatenate(ws), dtype=dtype)
        self.graph_ids = np.concatenate(gids)
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        if self.labels is not None and self.labels.shape != (self.num_graphs,):
            raise ShapeError("one label per graph required")


class GcnModel:
    """Graph-level binary classifier; single- or dual-branch."""

    def __init__(self, fc_layers, conv_layers, head_w: T.Tensor, head_b: T.Tensor,
                 feature_config: str, conv_kind: str | None):
        self.fc_layers = fc_layers
        self.conv_layers = conv_layers
        self.head_w = head_w
        self.head_b = head_b
        self.feature_config = feature_config
        self.conv_kind = conv_kind
        self.is_fitted = False

    @classmethod
    def create(cls, fc_in: int, conv_in: int | None = None, seed: int = 0,
               feature_config: str = "GCN_18", conv_kind: str | None = None,
               dtype=np.float32) -> "GcnModel":
        if feature_config not in FEATURE_CONFIGS:
            raise ConfigurationError(f"unknown feature config '{feature_config}'")
        if (conv_in is None) != (conv_kind is None):
            raise ConfigurationError("conv_in and conv_kind must be given together")
        rng = np.random.default_rng(seed)

        def branch(d_in):
            return [
                GraphConvLayer.create(d_in, HIDDEN, rng, dtype),
                GraphConvLayer.create(HIDDEN, HIDDEN, rng, dtype),
                GraphConvLayer.create(HIDDEN, HIDDEN, rng, dtype),
            ]

        fc_layers = branch(fc_in)
        conv_layers = branch(conv_in) if conv_in is not None else None
        head_in = 2 * HIDDEN if conv_layers else HIDDEN
        head_w = _glorot(rng, head_in, NUM_CLASSES, dtype)
        head_b = T.Tensor(np.zeros(NUM_CLASSES), requires_grad=True, dtype=dtype)
        return cls(fc_layers, conv_layers, head_w, head_b, feature_config, conv_kind)

    @property
    def dual_branch(self) -> bool:
        return self.conv_layers is not None

    def parameters(self):
        params = []
        for layer in self.fc_layers:
            params.extend(layer.parameters())
        if self.conv_layers:
            for layer in self.conv_layers:
                params.extend(layer.parameters())
        params.extend([self.head_w, self.head_b])
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def _run_branch(self, layers, batch: GraphBatch, tape) -> T.Tensor:
        h = T.Tensor(batch.features)
        for layer in layers:
            h = T.relu(layer.forward(h, batch.src, batch.dst, batch.edge_weights,
                                     batch.num_nodes, tape), tape)
        return T.segment_mean(h, batch.graph_ids, batch.num_graphs, tape)

    def forward(self, fc_batch: GraphBatch, conv_batch: GraphBatch | None = None,
                tape: T.Tape | None = None) -> T.Tensor:
        if self.dual_branch != (conv_batch is not None):
            raise ConfigurationError(
                "dual-branch model requires a conv batch (and single-branch forbids one)")
        pooled = self._run_branch(self.fc_layers, fc_batch, tape)
        if conv_batch is not None:
            if conv_batch.num_graphs != fc_batch.num_graphs:
                raise ConfigurationError("fc and conv batches must pair the same graphs")
            pooled = T.concat_cols(pooled, self._run_branch(self.conv_layers, conv_batch, tape),
                                   tape)
        return T.add(T.matmul(pooled, self.head_w, tape), self.head_b, tape)

    # ------------------------------------------------------------ persistence

    def save(self, path) -> None:
        tensors = {}
        for prefix, layers in (("branchfc", self.fc_layers),
                               ("branchconv", self.conv_layers or [])):
            for i, layer in enumerate(layers, start=1):
                tensors[f"{prefix}.l{i}.W"] = layer.w_neighbor.data
                tensors[f"{prefix}.l{i}.B"] = layer.b_self.data
                tensors[f"{prefix}.l{i}.bias"] = layer.bias.data
        tensors["head.W"] = self.head_w.data
        tensors["head.bias"] = self.head_b.data
        fc_in = self.fc_layers[0].w_neighbor.shape[0]
        conv_in = self.conv_layers[0].w_neighbor.shape[0] if self.conv_layers else 0
        tensors["config"] = np.array([
            2 if self.dual_branch else 1,
            fc_in,
            conv_in,
            _FEATURE_IDS.index(self.feature_config),
            _CONV_KIND_IDS[self.conv_kind],
        ], dtype=np.float32)
        bundle_io.write_tensors(tensors, path)

    @classmethod
    def load(cls, path) -> "GcnModel":
        tensors = bundle_io.read_tensors(path)
        try:
            cfg = tensors["config"]
            arity, fc_in, conv_in, feat_id, kind_id = (int(v) for v in cfg)

            def layer(prefix, i):
                return GraphConvLayer(
                    T.Tensor(tensors[f"{prefix}.l{i}.W"], requires_grad=True),
                    T.Tensor(tensors[f"{prefix}.l{i}.B"], requires_grad=True),
                    T.Tensor(tensors[f"{prefix}.l{i}.bias"], requires_grad=True),
                )

            fc_layers = [layer("branchfc", i) for i in (1, 2, 3)]
            conv_layers = [layer("branchconv", i) for i in (1, 2, 3)] if arity == 2 else None
            model = cls(fc_layers, conv_layers,
                        T.Tensor(tensors["head.W"], requires_grad=True),
                        T.Tensor(tensors["head.bias"], requires_grad=True),
                        _FEATURE_IDS[feat_id], _CONV_KIND_NAMES[kind_id])
        except KeyError as exc:
            raise bundle_io.MissingTensorError(
                f"checkpoint {path} missing tensor {exc}") from exc
        if fc_in != model.fc_layers[0].w_neighbor.shape[0]:
            raise ConfigurationError(f"checkpoint {path}: config/tensor width mismatch")
        model.is_fitted = True
        return model


def softmax_probs(logits_row: np.ndarray) -> np.ndarray:
    shifted = logits_row.astype(np.float64) - logits_row.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def predict(model: GcnModel, fc_graph: LayerGraph,
            conv_graph: LayerGraph | None = None) -> dict:
    """Classify one bundle's graphs; exact logit ties resolve to clean."""
    if not model.is_fitted:
        raise StateError("model is neither trained nor loaded from a checkpoint")
    fc_batch = GraphBatch([fc_graph])
    conv_batch = GraphBatch([conv_graph]) if conv_graph is not None else None
    logits = model.forward(fc_batch, conv_batch).data[0]
    probs = softmax_probs(logits)
    label = "trojaned" if logits[1] > logits[0] else "clean"
    return {"label": label, "probabilities": [float(probs[0]), float(probs[1])]}
