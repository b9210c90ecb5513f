import numpy as np
import pytest

from debugcn import graphs as G
from debugcn import model as M
from debugcn import tensor as T
from debugcn.errors import ConfigurationError, ShapeError, StateError


def _layer(w, b, bias):
    return M.GraphConvLayer(
        T.Tensor(np.asarray(w, np.float32)),
        T.Tensor(np.asarray(b, np.float32)),
        T.Tensor(np.asarray(bias, np.float32)),
    )


# ------------------------------------------------------------- layer forward

def test_graph_conv_zero_features_gives_bias_rows():
    layer = _layer(np.ones((2, 3)), np.ones((2, 3)), [0.5, -1.0, 2.0])
    h = T.Tensor(np.zeros((4, 2), np.float32))
    out = M.graph_conv_forward(layer, h, [[0, 1], [2, 3]], [1.0, 1.0])
    assert np.array_equal(out.data, np.tile([0.5, -1.0, 2.0], (4, 1)))


def test_graph_conv_identity_self_map():
    # B_self = I, W_neighbor = 0, bias = 0, no edges: output == input
    layer = _layer(np.zeros((3, 3)), np.eye(3), np.zeros(3))
    h = T.Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    out = M.graph_conv_forward(layer, h, np.zeros((0, 2)), [])
    assert np.array_equal(out.data, h.data)


def test_graph_conv_hand_neighbor_sum():
    # two nodes with features [1] and [2], one edge of weight 2.0,
    # W_neighbor = [[1]], B_self = 0: out[v] = 2 * h[other(v)]
    layer = _layer([[1.0]], [[0.0]], [0.0])
    h = T.Tensor([[1.0], [2.0]])
    out = M.graph_conv_forward(layer, h, [[0, 1]], [2.0])
    assert np.array_equal(out.data, [[4.0], [2.0]])

    # self term adds on top: B_self = [[3]] -> out[v] = 3 h[v] + 2 h[other]
    layer2 = _layer([[1.0]], [[3.0]], [0.0])
    out2 = M.graph_conv_forward(layer2, h, [[0, 1]], [2.0])
    assert np.array_equal(out2.data, [[7.0], [8.0]])


def test_graph_conv_width_mismatch():
    layer = _layer(np.ones((3, 2)), np.ones((3, 2)), [0.0, 0.0])
    with pytest.raises(ShapeError, match="width"):
        M.graph_conv_forward(layer, T.Tensor(np.zeros((2, 2))), [[0, 1]], [1.0])


# ------------------------------------------------------------------ full model

def _fc_graph(rng, shape=(3, 5), config="GCN_7"):
    return G.build_fc_bipartite(rng.standard_normal(shape), G.feature_config(config))


def test_zero_params_give_zero_logits():
    rng = np.random.default_rng(0)
    model = M.GcnModel.create(fc_in=7, seed=0, feature_config="GCN_7")
    for p in model.parameters():
        p.data[...] = 0.0
    logits = model.forward(M.GraphBatch([_fc_graph(rng)]))
    assert np.array_equal(logits.data, [[0.0, 0.0]])


def test_forward_permutation_invariance():
    rng = np.random.default_rng(1)
    model = M.GcnModel.create(fc_in=7, seed=3, feature_config="GCN_7")
    g = _fc_graph(rng, (4, 9))
    base = model.forward(M.GraphBatch([g])).data
    for trial in range(5):
        p = G.random_pair_swaps(g, 50, seed=trial)
        got = model.forward(M.GraphBatch([p])).data
        assert np.abs(got - base).max() <= 1e-5


def test_batched_equals_per_graph():
    rng = np.random.default_rng(2)
    model = M.GcnModel.create(fc_in=7, seed=4, feature_config="GCN_7")
    graphs = [_fc_graph(rng, (int(rng.integers(2, 6)), int(rng.integers(2, 8))))
              for _ in range(12)]
    batched = model.forward(M.GraphBatch(graphs)).data
    singles = np.concatenate([model.forward(M.GraphBatch([g])).data for g in graphs])
    assert np.abs(batched - singles).max() <= 1e-5


def test_dual_branch_requires_conv_batch():
    rng = np.random.default_rng(3)
    model = M.GcnModel.create(fc_in=7, conv_in=4, seed=5,
                              feature_config="GCN_7", conv_kind=G.KIND_CONV_FLAT)
    fc_batch = M.GraphBatch([_fc_graph(rng)])
    with pytest.raises(ConfigurationError):
        model.forward(fc_batch)
    conv_batch = M.GraphBatch([G.build_conv_flat(rng.standard_normal((3, 1, 2, 2)))])
    logits = model.forward(fc_batch, conv_batch)
    assert logits.shape == (1, 2)

    single = M.GcnModel.create(fc_in=7, seed=5, feature_config="GCN_7")
    with pytest.raises(ConfigurationError):
        single.forward(fc_batch, conv_batch)


def test_logits_finite_for_bounded_weights():
    rng = np.random.default_rng(4)
    for trial in range(10):
        fc = rng.uniform(-10, 10, (int(rng.integers(1, 7)), int(rng.integers(1, 9))))
        model = M.GcnModel.create(fc_in=18, seed=trial)
        logits = model.forward(M.GraphBatch([G.build_fc_bipartite(fc, G.feature_config("GCN_18"))]))
        assert np.isfinite(logits.data).all()


def test_batch_rejects_mixed_widths_and_bad_labels():
    rng = np.random.default_rng(5)
    g7 = _fc_graph(rng, config="GCN_7")
    g18 = _fc_graph(rng, config="GCN_18")
    with pytest.raises(ShapeError, match="width"):
        M.GraphBatch([g7, g18])
    with pytest.raises(ShapeError, match="label"):
        M.GraphBatch([g7], labels=[0, 1])
    with pytest.raises(ConfigurationError, match="empty"):
        M.GraphBatch([])


# ----------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    model = M.GcnModel.create(fc_in=7, conv_in=4, seed=7,
                              feature_config="GCN_7", conv_kind=G.KIND_CONV_FLAT)
    model.is_fitted = True
    path = tmp_path / "model.dwb"
    model.save(path)
    back = M.GcnModel.load(path)
    assert back.is_fitted and back.dual_branch
    assert back.feature_config == "GCN_7" and back.conv_kind == G.KIND_CONV_FLAT
    for p, q in zip(model.parameters(), back.parameters()):
        assert p.data.tobytes() == q.data.tobytes()

    fc_batch = M.GraphBatch([_fc_graph(rng)])
    conv_batch = M.GraphBatch([G.build_conv_flat(rng.standard_normal((3, 1, 2, 2)))])
    assert np.array_equal(model.forward(fc_batch, conv_batch).data,
                          back.forward(fc_batch, conv_batch).data)


def test_checkpoint_single_branch_round_trip(tmp_path):
    model = M.GcnModel.create(fc_in=16, seed=8, feature_config="GCN_16b")
    model.is_fitted = True
    path = tmp_path / "m.dwb"
    model.save(path)
    back = M.GcnModel.load(path)
    assert back.conv_layers is None and back.conv_kind is None
    assert back.feature_config == "GCN_16b"


# -------------------------------------------------------------------- predict

def _biased_model(head_bias):
    model = M.GcnModel.create(fc_in=7, seed=0, feature_config="GCN_7")
    for p in model.parameters():
        p.data[...] = 0.0
    model.head_b.data[...] = head_bias
    model.is_fitted = True
    return model


def test_predict_probabilities_and_labels():
    g = _fc_graph(np.random.default_rng(9))

    res = M.predict(_biased_model([0.2, 2.2]), g)
    assert res["label"] == "trojaned"
    expected = float(1.0 / (1.0 + np.exp(-2.0)))
    assert abs(res["probabilities"][1] - expected) < 1e-6

    res = M.predict(_biased_model([5.0, 5.0]), g)
    assert res["label"] == "clean"  # exact tie resolves to clean
    assert abs(res["probabilities"][0] - 0.5) < 1e-9

    res = M.predict(_biased_model([3.0, -3.0]), g)
    assert res["label"] == "clean"
    assert abs(sum(res["probabilities"]) - 1.0) < 1e-12


def test_predict_requires_fitted_model():
    model = M.GcnModel.create(fc_in=7, seed=0, feature_config="GCN_7")
    with pytest.raises(StateError):
        M.predict(model, _fc_graph(np.random.default_rng(10)))
