"""Layer-to-graph conversion and per-node feature engineering.

Three graph kinds:
  fc_bipartite -- final FC matrix as a complete bipartite graph, left nodes
                  are the layer inputs (columns), right nodes the outputs
                  (rows), edge weights the raw FC weights;
  conv_flat    -- one node per output filter, chained in series, flattened
                  filter weights as the node features;
  conv_2d      -- one node per filter cell, 4-neighborhood grid per filter
                  slice, consecutive slices chained through center cells.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError

KIND_FC = "fc_bipartite"
KIND_CONV_FLAT = "conv_flat"
KIND_CONV_2D = "conv_2d"


@dataclass(frozen=True)
class FeatureConfig:
    """Which per-node statistics form the node feature vector (Table of configs)."""

    name: str
    const1: bool
    side: bool
    mean: bool
    min: bool
    max: bool
    sum: bool
    hist_counts: bool
    hist_bounds: bool
    degree: bool

    @property
    def width(self) -> int:
        return (self.const1 + self.side + self.mean + self.min + self.max + self.sum
                + 5 * self.hist_counts + 6 * self.hist_bounds + self.degree)


_CONFIG_FLAGS = {
    #            const side  mean  min   max   sum   cnts  bnds  deg
    "GCN_5":    (True, True, True, True, True, False, False, False, False),
    "GCN_7":    (True, True, True, True, True, True, False, False, True),
    "GCN_16a":  (True, True, True, True, True, False, True, True, False),
    "GCN_16b":  (True, False, True, True, True, True, True, True, False),
    "GCN_18":   (True, True, True, True, True, True, True, True, True),
}

FEATURE_CONFIGS = {name: FeatureConfig(name, *flags) for name, flags in _CONFIG_FLAGS.items()}
_EXPECTED_WIDTH = {"GCN_5": 5, "GCN_7": 7, "GCN_16a": 16, "GCN_16b": 16, "GCN_18": 18}
assert all(FEATURE_CONFIGS[n].width == w for n, w in _EXPECTED_WIDTH.items())


def feature_config(name: str) -> FeatureConfig:
    try:
        return FEATURE_CONFIGS[name]
    except KeyError:
        raise ValidationError(
            f"unknown feature config '{name}', expected one of {sorted(FEATURE_CONFIGS)}"
        ) from None


@dataclass
class LayerGraph:
    """Undirected weighted graph plus node features; the unit the GCN consumes."""

    num_nodes: int
    node_features: np.ndarray          # [N, d] float32
    edges: np.ndarray                  # [E, 2] int64, undirected pairs
    edge_weights: np.ndarray           # [E] float32
    kind: str
    num_left: int | None = None        # fc_bipartite only: size of the left group

    @property
    def feature_width(self) -> int:
        return self.node_features.shape[1]

    def directed_edges(self):
        """(src, dst, weight) with both orientations of every undirected edge,
        sorted by dst for scatter locality; computed once and cached."""
        cached = getattr(self, "_directed", None)
        if cached is None:
            src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
            dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
            w = np.concatenate([self.edge_weights, self.edge_weights])
            order = np.argsort(dst, kind="stable")
            cached = (np.ascontiguousarray(src[order]),
                      np.ascontiguousarray(dst[order]),
                      np.ascontiguousarray(w[order]))
            object.__setattr__(self, "_directed", cached)
        return cached


# ------------------------------------------------------------- node features

def _histogram(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """5 equal-width bins over [min, max]; b_i <= x < b_{i+1}, max lands in bin 4."""
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([values.size, 0, 0, 0, 0], dtype=np.float64), np.full(6, lo)
    bounds = lo + np.arange(6) * ((hi - lo) / 5.0)
    bounds[5] = hi
    bins = np.searchsorted(bounds[1:5], values, side="right")
    counts = np.bincount(bins, minlength=5).astype(np.float64)
    return counts, bounds


def compute_node_features(incident_weights, side: str, config: FeatureConfig) -> np.ndarray:
    """Feature vector for one node from the weights of its incident edges.

    Fixed order: [1], [side flag], mean, min, max, [sum], [5 histogram
    counts], [6 bin boundaries], [degree].
    """
    vals = np.asarray(incident_weights, dtype=np.float64).ravel()
    if vals.size == 0:
        raise ValidationError("degenerate node: empty incident weight set")
    if side not in ("left", "right"):
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    parts = []
    if config.const1:
        parts.append([1.0])
    if config.side:
        parts.append([0.0 if side == "left" else 1.0])
    if config.mean:
        parts.append([vals.mean()])
    if config.min:
        parts.append([vals.min()])
    if config.max:
        parts.append([vals.max()])
    if config.sum:
        parts.append([vals.sum()])
    if config.hist_counts or config.hist_bounds:
        counts, bounds = _histogram(vals)
        if config.hist_counts:
            parts.append(counts)
        if config.hist_bounds:
            parts.append(bounds)
    if config.degree:
        parts.append([float(vals.size)])
    return np.concatenate(parts).astype(np.float32)


def _feature_block(mat: np.ndarray, side_flag: float, config: FeatureConfig) -> np.ndarray:
    """Vectorized compute_node_features for rows of equal degree.

    mat[i] holds the incident weights of node i; must match the per-node
    function bit-for-bit (same float64 intermediate math).
    """
    mat = mat.astype(np.float64)
    n, deg = mat.shape
    cols = []
    if config.const1:
        cols.append(np.ones(n))
    if config.side:
        cols.append(np.full(n, side_flag))
    lo = mat.min(axis=1)
    hi = mat.max(axis=1)
    if config.mean:
        cols.append(mat.mean(axis=1))
    if config.min:
        cols.append(lo)
    if config.max:
        cols.append(hi)
    if config.sum:
        cols.append(mat.sum(axis=1))
    if config.hist_counts or config.hist_bounds:
        bounds = lo[:, None] + np.arange(6) * ((hi - lo)[:, None] / 5.0)
        bounds[:, 5] = hi
        counts = np.empty((n, 5))
        for b in range(4):
            counts[:, b] = ((mat >= bounds[:, b, None]) & (mat < bounds[:, b + 1, None])).sum(axis=1)
        counts[:, 4] = deg - counts[:, :4].sum(axis=1)
        flat = lo == hi
        if flat.any():
            counts[flat] = 0.0
            counts[flat, 0] = deg
            bounds[flat] = lo[flat, None]
        if config.hist_counts:
            cols.append(counts.T)
        if config.hist_bounds:
            cols.append(bounds.T)
    if config.degree:
        cols.append(np.full(n, float(deg)))
    stacked = [c[None, :] if c.ndim == 1 else c for c in cols]
    return np.concatenate(stacked, axis=0).T.astype(np.float32)


# ------------------------------------------------------------- graph builders

def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise ValidationError(f"{what} contains non-finite values")


def build_fc_bipartite(fc_weight: np.ndarray, config: FeatureConfig) -> LayerGraph:
    """Complete bipartite graph of an FC matrix [outputs r x inputs c].

    Nodes 0..c-1 are the left/input side, c..c+r-1 the right/output side.
    Edge (j, c+i) carries weight fc_weight[i, j].
    """
    fc_weight = np.asarray(fc_weight)
    if fc_weight.ndim != 2:
        raise ValidationError(f"fc weight must be 2-D, got shape {fc_weight.shape}")
    _check_finite(fc_weight, "fc weight")
    r, c = fc_weight.shape
    # left node j sees column j (degree r); right node i sees row i (degree c)
    feats = np.concatenate([
        _feature_block(fc_weight.T, 0.0, config),
        _feature_block(fc_weight, 1.0, config),
    ])
    rows = np.repeat(np.arange(r, dtype=np.int64), c)
    cols = np.tile(np.arange(c, dtype=np.int64), r)
    edges = np.stack([cols, c + rows], axis=1)
    weights = fc_weight.astype(np.float32).ravel()
    return LayerGraph(c + r, feats, edges, weights, KIND_FC, num_left=c)


def build_conv_flat(conv: np.ndarray) -> LayerGraph:
    """One node per output filter, features its flattened weights, chain edges."""
    conv = np.asarray(conv)
    if conv.ndim != 4:
        raise ValidationError(f"conv weight must be 4-D, got shape {conv.shape}")
    _check_finite(conv, "conv weight")
    f_out = conv.shape[0]
    feats = conv.reshape(f_out, -1).astype(np.float32)
    chain = np.arange(f_out - 1, dtype=np.int64)
    edges = np.stack([chain, chain + 1], axis=1)
    weights = np.ones(max(f_out - 1, 0), dtype=np.float32)
    return LayerGraph(f_out, feats, edges, weights, KIND_CONV_FLAT)


def build_conv_2d(conv: np.ndarray) -> LayerGraph:
    """One node per filter cell; per-slice 4-neighborhood grids chained at centers."""
    conv = np.asarray(conv)
    if conv.ndim != 4:
        raise ValidationError(f"conv weight must be 4-D, got shape {conv.shape}")
    _check_finite(conv, "conv weight")
    f_out, f_in, h, w = conv.shape
    n_slices = f_out * f_in
    cell = h * w
    feats = conv.reshape(-1, 1).astype(np.float32)

    grid = np.arange(cell, dtype=np.int64).reshape(h, w)
    horiz = np.stack([grid[:, :-1].ravel(), grid[:, 1:].ravel()], axis=1)
    vert = np.stack([grid[:-1, :].ravel(), grid[1:, :].ravel()], axis=1)
    slice_edges = np.concatenate([horiz, vert])
    offsets = np.arange(n_slices, dtype=np.int64)[:, None, None] * cell
    edges = (slice_edges[None, :, :] + offsets).reshape(-1, 2)

    center = (h // 2) * w + (w // 2)
    if n_slices > 1:
        starts = np.arange(n_slices - 1, dtype=np.int64) * cell + center
        chain = np.stack([starts, starts + cell], axis=1)
        edges = np.concatenate([edges, chain])
    weights = np.ones(len(edges), dtype=np.float32)
    return LayerGraph(n_slices * cell, feats, edges, weights, KIND_CONV_2D)


# ----------------------------------------------------------------- relabeling

def permute_nodes(graph: LayerGraph, permutation) -> LayerGraph:
    """Relabel nodes: node i becomes permutation[i], features and edges follow."""
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.shape != (graph.num_nodes,) or not np.array_equal(
            np.sort(perm), np.arange(graph.num_nodes)):
        raise ValidationError("permutation must be a bijection on node indices")
    if graph.num_left is not None:
        c = graph.num_left
        if (perm[:c] >= c).any() or (perm[c:] < c).any():
            raise ValidationError("fc-graph permutation must stay within each side")
    feats = np.empty_like(graph.node_features)
    feats[perm] = graph.node_features
    edges = perm[graph.edges]
    return replace(graph, node_features=feats, edges=edges,
                   edge_weights=graph.edge_weights.copy())


def random_pair_swaps(graph: LayerGraph, k: int, seed: int) -> LayerGraph:
    """Compose k random transpositions (within the left group for fc graphs)."""
    rng = np.random.default_rng(seed)
    pool = graph.num_left if graph.num_left is not None else graph.num_nodes
    perm = np.arange(graph.num_nodes, dtype=np.int64)
    if pool >= 2:
        for _ in range(k):
            i, j = rng.choice(pool, size=2, replace=False)
            perm[i], perm[j] = perm[j], perm[i]
    return permute_nodes(graph, perm)


# -------------------------------------------------------------------- dumping

def graph_to_json(graph: LayerGraph) -> dict:
    """Debug/oracle dump: plain-JSON view of a LayerGraph."""
    return {
        "num_nodes": graph.num_nodes,
        "kind": graph.kind,
        "features": graph.node_features.astype(float).tolist(),
        "edges": [
            [int(u), int(v), float(w)]
            for (u, v), w in zip(graph.edges, graph.edge_weights)
        ],
    }
