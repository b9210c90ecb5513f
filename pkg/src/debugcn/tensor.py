"""Minimal dense-tensor engine with reverse-mode autodiff.

Covers exactly what the graph classifier needs: matmul, segment reductions,
relu, bias add, column concat, softmax cross-entropy and an Adam step.
Storage defaults to float32; every op preserves the dtype of its inputs so
test oracles can run the same code in float64.

The tape is rebuilt on every forward pass: ops executed with a `tape`
argument append their backward closure, and `Tape.backward` replays the
closures in exact reverse execution order. Gradients only flow into tensors
created with requires_grad=True (or computed from them).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
        arr = np.asarray(arr, dtype=dtype)
        # note: ascontiguousarray would promote 0-d scalars to 1-d
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros(self.data.shape, self.data.dtype)
        return self.grad

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of executed ops; backward replays them in reverse."""

    def __init__(self):
        self._backward_fns = []
        self._tensors = []

    def record(self, backward_fn, *tensors):
        for t in tensors:
            if t.requires_grad:
                t.ensure_grad()
                self._tensors.append(t)
        self._backward_fns.append(backward_fn)

    def backward(self, loss):
        if loss.data.ndim != 0:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        self.backward_from(loss)

    def backward_from(self, output):
        """Seed the output gradient with ones and replay the tape in reverse."""
        output.ensure_grad()
        output.grad[...] = 1
        for fn in reversed(self._backward_fns):
            fn()

    def clear(self):
        for t in self._tensors:
            t.zero_grad()
        self._backward_fns.clear()
        self._tensors.clear()


def _as_index_array(idx):
    arr = np.ascontiguousarray(idx, dtype=np.int64)
    if arr.ndim != 1:
        raise ShapeError(f"index array must be 1-D, got shape {arr.shape}")
    return arr


def _result(tape, out: Tensor, backward_fn, *inputs) -> Tensor:
    """Mark the output differentiable and record the closure when taping."""
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(backward_fn, *inputs, out)
    return out


# ------------------------------------------------------------------- forward ops

def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward():
        if a.requires_grad:
            a.grad += out.grad @ b.data.T
        if b.requires_grad:
            b.grad += a.data.T @ out.grad
    return _result(tape, out, backward, a, b)


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise sum; `b` may be a bias row broadcast over a's rows."""
    bias_row = b.ndim == 1
    if bias_row:
        if a.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"add: cannot broadcast bias {b.shape} onto {a.shape}")
    elif a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def backward():
        if a.requires_grad:
            a.grad += out.grad
        if b.requires_grad:
            b.grad += out.grad.sum(axis=0) if bias_row else out.grad
    return _result(tape, out, backward, a, b)


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def backward():
        # subgradient at 0 is 0
        if x.requires_grad:
            x.grad += out.grad * (x.data > 0)
    return _result(tape, out, backward, x)


def concat_cols(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    split = a.shape[1]

    def backward():
        if a.requires_grad:
            a.grad += out.grad[:, :split]
        if b.requires_grad:
            b.grad += out.grad[:, split:]
    return _result(tape, out, backward, a, b)


def segment_sum(messages: Tensor, targets, num_nodes: int, tape: Tape | None = None) -> Tensor:
    """Row v of the output is the sum of message rows whose target is v."""
    idx = _as_index_array(targets)
    if idx.shape[0] != messages.shape[0]:
        raise ShapeError(
            f"segment_sum: {messages.shape[0]} messages but {idx.shape[0]} targets")
    if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
        raise IndexError(f"segment_sum: target index out of range [0, {num_nodes})")
    out_data = np.zeros((num_nodes, messages.shape[1]), dtype=messages.data.dtype)
    if idx.size:
        kernels.scatter_add_rows(messages.data, idx, out_data)
    out = Tensor(out_data)

    def backward():
        if messages.requires_grad:
            messages.grad += out.grad[idx]
    return _result(tape, out, backward, messages)


def segment_mean(node_embeddings: Tensor, graph_ids, num_graphs: int,
                 tape: Tape | None = None) -> Tensor:
    idx = _as_index_array(graph_ids)
    if idx.shape[0] != node_embeddings.shape[0]:
        raise ShapeError("segment_mean: one graph id per node row required")
    if idx.size and (idx.min() < 0 or idx.max() >= num_graphs):
        raise IndexError(f"segment_mean: graph id out of range [0, {num_graphs})")
    counts = np.bincount(idx, minlength=num_graphs)
    if (counts == 0).any():
        raise ValidationError("segment_mean: every graph in the batch needs >= 1 node")
    dtype = node_embeddings.data.dtype
    sums = np.zeros((num_graphs, node_embeddings.shape[1]), dtype=dtype)
    kernels.scatter_add_rows(node_embeddings.data, idx, sums)
    inv = (1.0 / counts).astype(dtype)
    out = Tensor(sums * inv[:, None])

    def backward():
        if node_embeddings.requires_grad:
            node_embeddings.grad += out.grad[idx] * inv[idx][:, None]
    return _result(tape, out, backward, node_embeddings)


def neighbor_aggregate(x: Tensor, src, dst, edge_weights, num_nodes: int,
                       tape: Tape | None = None) -> Tensor:
    """Edge-weighted aggregation: out[v] = sum over edges (u->v) of w * x[u].

    Equivalent to segment_sum of weighted gathered rows, fused into one
    scatter pass per direction (the hot loop of training).
    """
    s = _as_index_array(src)
    t = _as_index_array(dst)
    if s.shape != t.shape:
        raise ShapeError("neighbor_aggregate: src/dst length mismatch")
    if s.size and (min(s.min(), t.min()) < 0 or max(s.max(), t.max()) >= num_nodes):
        raise IndexError(f"neighbor_aggregate: endpoint out of range [0, {num_nodes})")
    w = np.ascontiguousarray(edge_weights, dtype=x.data.dtype)
    out_data = np.zeros((num_nodes, x.shape[1]), dtype=x.data.dtype)
    if s.size:
        kernels.edge_combine(x.data, s, t, w, out_data)
    out = Tensor(out_data)

    def backward():
        if x.requires_grad and s.size:
            kernels.edge_combine(out.grad, t, s, w, x.grad)
    return _result(tape, out, backward, x)


def graph_conv_combine(h: Tensor, w_neighbor: Tensor, b_self: Tensor, bias: Tensor,
                       src, dst, edge_weights, num_nodes: int,
                       tape: Tape | None = None) -> Tensor:
    """Fused GraphConv combine: h @ B_self + aggregate(h @ W_neighbor) + bias.

    Semantically identical to composing matmul/neighbor_aggregate/add; fused
    to cut temporary allocations in the training loop.
    """
    if h.shape[1] != w_neighbor.shape[0] or w_neighbor.shape != b_self.shape \
            or bias.shape != (w_neighbor.shape[1],):
        raise ShapeError(
            f"graph_conv_combine: widths disagree (h {h.shape}, W {w_neighbor.shape}, "
            f"B {b_self.shape}, bias {bias.shape})")
    if h.shape[0] != num_nodes:
        raise ShapeError("graph_conv_combine: one feature row per node required")
    s = _as_index_array(src)
    t = _as_index_array(dst)
    if s.shape != t.shape:
        raise ShapeError("graph_conv_combine: src/dst length mismatch")
    if s.size and (min(s.min(), t.min()) < 0 or max(s.max(), t.max()) >= num_nodes):
        raise IndexError(f"graph_conv_combine: endpoint out of range [0, {num_nodes})")
    w = np.ascontiguousarray(edge_weights, dtype=h.data.dtype)

    neigh_data = h.data @ w_neighbor.data
    out_data = h.data @ b_self.data
    out_data += bias.data
    if s.size:
        kernels.edge_combine(neigh_data, s, t, w, out_data)
    out = Tensor(out_data)

    def backward():
        if bias.requires_grad:
            bias.grad += out.grad.sum(axis=0)
        if b_self.requires_grad:
            b_self.grad += h.data.T @ out.grad
        neigh_grad = np.zeros_like(neigh_data)
        if s.size:
            kernels.edge_combine(out.grad, t, s, w, neigh_grad)
        if w_neighbor.requires_grad:
            w_neighbor.grad += h.data.T @ neigh_grad
        if h.requires_grad:
            h.grad += neigh_grad @ w_neighbor.data.T
            h.grad += out.grad @ b_self.data.T
    return _result(tape, out, backward, h, w_neighbor, b_self, bias)


def softmax_cross_entropy(logits: Tensor, labels, tape: Tape | None = None) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-D, got {logits.shape}")
    lab = _as_index_array(labels)
    if lab.shape[0] != logits.shape[0]:
        raise ShapeError("softmax_cross_entropy: one label per logit row required")
    if lab.size and (lab.min() < 0 or lab.max() >= logits.shape[1]):
        raise ValidationError("softmax_cross_entropy: label out of class range")
    g = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    rows = np.arange(g)
    nll = -(shifted[rows, lab] - np.log(exp.sum(axis=1)))
    out = Tensor(np.asarray(nll.mean(), dtype=logits.data.dtype))

    def backward():
        if logits.requires_grad:
            onehot = np.zeros_like(probs)
            onehot[rows, lab] = 1
            logits.grad += (probs - onehot) * (out.grad / g)
    return _result(tape, out, backward, logits)


# --------------------------------------------------------------------- optimizer

class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps=1e-8) -> None:
    """Standard Adam update with bias correction, reading grads off the params."""
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad if p.grad is not None else 0.0
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
