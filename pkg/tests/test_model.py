import json
import zipfile

import numpy as np
import pytest

from gtcnn import (
    GTCNN,
    CheckpointError,
    ConfigError,
    LayerConfig,
    ModelConfig,
    SizeMismatchError,
    SparseMatrix,
    SpatialGraph,
    filter_bank_forward,
    GTFilterBank,
    layer_forward,
    load_checkpoint,
    model_forward,
    read_checkpoint,
    sample_sbm,
    save_checkpoint,
)
from gtcnn.model import readout_forward
from gtcnn.pooling import summarize
from oracles import random_sparse


def _graph(seed=3, N=20, C=4):
    return sample_sbm(N, C, 0.6, 0.1, seed=seed)


def _snapshot_model():
    cfg = ModelConfig(
        N=20, T=4, num_classes=4, seed=11,
        layers=[LayerConfig(3, order=2, alpha=1, ratio=2, active=12), LayerConfig(2, order=1, alpha=1, ratio=1, active=6, summarizer="mean")],
    )
    return GTCNN(cfg, _graph())


def test_config_validation():
    with pytest.raises(ConfigError):
        LayerConfig(0)
    with pytest.raises(ConfigError):
        LayerConfig(2, order=-1)
    with pytest.raises(ConfigError):
        LayerConfig(2, nonlinearity="tanh")
    with pytest.raises(ConfigError):
        ModelConfig(N=4, T=2, layers=[])
    with pytest.raises(ConfigError):
        ModelConfig(N=4, T=2, layers=[{"features": 2, "oder": 2}])
    with pytest.raises(ConfigError):
        ModelConfig(N=4, T=2, layers=[{"features": 2}], product="tensor")


def test_learn_coupling_defaults():
    assert ModelConfig(N=4, T=2, layers=[LayerConfig(1)]).learn_coupling == [True] * 4
    assert ModelConfig(N=4, T=2, layers=[LayerConfig(1)], product="kronecker").learn_coupling == [False] * 4


def test_preset_coupling_is_exact():
    m = GTCNN(ModelConfig(N=20, T=3, layers=[LayerConfig(2)], product="strong"), _graph())
    np.testing.assert_array_equal(m.params["layers.0.coupling"], [0, 1, 1, 1])


def test_all_zero_coupling_rejected():
    cfg = ModelConfig(N=20, T=3, layers=[LayerConfig(2)])
    params = GTCNN(cfg, _graph()).params
    params["layers.0.coupling"] = np.zeros(4)
    with pytest.raises(ConfigError):
        GTCNN(cfg, _graph(), params)


def test_shape_mismatch_names_layer():
    cfg = ModelConfig(N=20, T=3, layers=[LayerConfig(2), LayerConfig(3)])
    params = GTCNN(cfg, _graph()).params
    params["layers.1.taps"] = np.zeros((3, 2, 5))
    with pytest.raises(SizeMismatchError, match="layer 1"):
        GTCNN(cfg, _graph(), params)


def test_graph_size_mismatch():
    with pytest.raises(SizeMismatchError):
        GTCNN(ModelConfig(N=10, T=3, layers=[LayerConfig(2)]), _graph())


def test_input_size_mismatch(rng):
    m = GTCNN(ModelConfig(N=20, T=3, layers=[LayerConfig(2)]), _graph())
    with pytest.raises(SizeMismatchError):
        m(rng.standard_normal((2, 20, 4)))


def _identity_layer_model(N=20, T=3, task="forecast"):
    cfg = ModelConfig(N=N, T=T, task=task, num_classes=3, layers=[LayerConfig(1, mode="grid", spatial_order=0, temporal_order=0, nonlinearity="identity")])
    m = GTCNN(cfg, _graph())
    m.params["layers.0.grid"][:] = 1.0
    return m


def test_layer_identity_passthrough(rng):
    m = _identity_layer_model()
    X = rng.standard_normal((2, 20, 3))
    x = m.prepare_input(X)
    np.testing.assert_array_equal(layer_forward(m, 0, x), x)


def test_relu_on_negative_preactivations(rng):
    m = _identity_layer_model()
    m.config.layers[0].nonlinearity = "relu"
    X = -np.abs(rng.standard_normal((2, 20, 3))) - 0.1
    assert np.all(layer_forward(m, 0, m.prepare_input(X)) == 0)


def test_layer_matches_manual_composition(rng):
    g = _graph()
    cfg = ModelConfig(N=20, T=4, layers=[LayerConfig(2, order=2, alpha=1, ratio=2, active=10)], num_classes=3)
    m = GTCNN(cfg, g)
    m.params["layers.0.bias"] = rng.standard_normal(2)
    X = rng.standard_normal((20, 4))
    out = layer_forward(m, 0, m.prepare_input(X[None]))[:, :, 0, :].transpose(1, 0, 2)  # N x T' x F
    bank = GTFilterBank(1, 2, "parametric", taps=m.params["layers.0.taps"], coupling=m.params["layers.0.coupling"])
    S_T = m.temporal_shifts[0]
    u = filter_bank_forward(X, bank, m.S, S_T)
    v = summarize(u, g.shift, S_T, 1, "max")
    w = v[:, ::2]
    active = m.plan.layers[0].active
    z = np.zeros_like(w)
    z[active] = w[active] + m.params["layers.0.bias"]
    np.testing.assert_allclose(out, np.maximum(z, 0), atol=1e-14)


def test_zero_input_zero_logits():
    m = _snapshot_model()
    np.testing.assert_array_equal(m(np.zeros((2, 20, 4))), 0.0)


def test_identity_forecast_returns_last_slice(rng):
    m = _identity_layer_model(T=3)
    N, T = 20, 3
    W = np.zeros((N, N * T))
    for n in range(N):
        W[n, n * T + T - 1] = 1.0  # per-sample flattening is (feature, node, time)
    m.params["readout.weight"] = W
    X = rng.standard_normal((4, N, T))
    np.testing.assert_array_equal(model_forward(m, X), X[:, :, -1])


def test_regression_snapshot():
    X = np.random.default_rng(5).standard_normal((3, 20, 4))
    expected = np.array([
        [-0.03151258690893381, -0.04290117637645393, -0.00719711960414669, -0.02477705435121424],
        [-0.0309916790800002, -0.04168233594898153, -0.00645569245311397, -0.01286011383453094],
        [-0.03787637870997978, -0.04302496536897843, -0.00713198836920523, -0.04397938452643679],
    ])
    np.testing.assert_allclose(_snapshot_model()(X), expected, rtol=1e-12, atol=1e-15)


def test_readout_examples(rng):
    z = rng.standard_normal((3, 5))
    b = rng.standard_normal(4)
    np.testing.assert_array_equal(readout_forward(z, np.zeros((4, 5)), b), np.tile(b, (3, 1)))
    np.testing.assert_array_equal(readout_forward(z, np.eye(5), np.zeros(5)), z)
    W = rng.standard_normal((4, 5))
    np.testing.assert_allclose(readout_forward(z, W, b), np.array([W @ zi + b for zi in z]), atol=1e-14)


def test_readout_ignores_inactive_nodes(rng):
    m = _snapshot_model()
    shapes = m.output_shapes()
    F, n_act, T_out = shapes[-1]
    assert m.params["readout.weight"].shape[1] == F * n_act * T_out


def test_output_shapes_follow_dimension_law():
    m = _snapshot_model()
    assert m.output_shapes() == [(3, 12, 2), (2, 6, 2)]


def _permutation_check(rng, readout_sum):
    N, T = 12, 3
    A = random_sparse(rng, N, 0.4, symmetric=True)
    A = (A != 0).astype(float)
    g = SpatialGraph(SparseMatrix.from_dense(A))
    perm = rng.permutation(N)
    P = np.eye(N)[perm]  # (P x)_i = x_perm[i]
    gp = SpatialGraph(SparseMatrix.from_dense(P @ A @ P.T))
    cfg = ModelConfig(N=N, T=T, num_classes=3, layers=[LayerConfig(3, order=2), LayerConfig(2, mode="grid", spatial_order=2, temporal_order=1)])
    m = GTCNN(cfg, g)
    mp = GTCNN(cfg, gp, m.params)
    X = rng.standard_normal((2, N, T))
    xa, xb = m.prepare_input(X), mp.prepare_input(X[:, perm])
    for i in range(2):
        xa, xb = layer_forward(m, i, xa), layer_forward(mp, i, xb)
    if readout_sum:
        return xa.sum(axis=1), xb.sum(axis=1)
    return xa[:, perm], xb


def test_permutation_equivariance(rng):
    a, b = _permutation_check(rng, False)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_sum_readout_permutation_invariance(rng):
    a, b = _permutation_check(rng, True)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_every_parameter_matters(rng):
    cfg = ModelConfig(N=20, T=4, num_classes=3, layers=[LayerConfig(3, order=2, alpha=1, active=10), LayerConfig(2, mode="grid", spatial_order=1, temporal_order=2)])
    m = GTCNN(cfg, _graph())
    for k in m.params:
        m.params[k] = m.params[k] + 0.3 * rng.standard_normal(m.params[k].shape)
    X = rng.standard_normal((4, 20, 4))
    base = m(X)
    for name, p in m.params.items():
        old = p.copy()
        p += 0.5
        assert np.max(np.abs(m(X) - base)) > 1e-8, name
        p[...] = old


def test_time_as_features_baseline(rng):
    cfg = ModelConfig(N=20, T=3, layers=[LayerConfig(2)], product="cartesian", time_as_features=True, num_classes=3)
    m = GTCNN(cfg, _graph())
    assert m.params["layers.0.taps"].shape == (2, 3, 3)
    assert m.plan.layers[0].T_in == 1
    assert m(rng.standard_normal((2, 20, 3))).shape == (2, 3)


# -- checkpoints -------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    m = _snapshot_model()
    for k in m.params:
        m.params[k] = m.params[k] + rng.standard_normal(m.params[k].shape)
    path = tmp_path / "m.npz"
    save_checkpoint(m, path, {"note": "x"})
    back = load_checkpoint(path, _graph())
    X = rng.standard_normal((3, 20, 4))
    np.testing.assert_array_equal(back(X), m(X))
    params, meta = read_checkpoint(path)
    assert meta["format_version"] == "1.1" and meta["metadata"] == {"note": "x"}
    with np.load(path) as data:
        assert all(data[k].dtype == np.dtype("<f8") for k in data.files if k.startswith("param/"))


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "m.npz"
    save_checkpoint(_snapshot_model(), path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _graph())


def _rewrite_version(path, version):
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    meta = json.loads(bytes(arrays["__meta__"]).decode())
    meta["format_version"] = version
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def test_checkpoint_older_minor_warns(tmp_path):
    path = tmp_path / "m.npz"
    save_checkpoint(_snapshot_model(), path)
    _rewrite_version(path, "1.0")
    with pytest.warns(UserWarning, match="older"):
        load_checkpoint(path, _graph())


@pytest.mark.parametrize("version", ["2.0", "1.9", "0.3", "one"])
def test_checkpoint_unsupported_version(tmp_path, version):
    path = tmp_path / "m.npz"
    save_checkpoint(_snapshot_model(), path)
    _rewrite_version(path, version)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _graph())


def test_checkpoint_graph_mismatch(tmp_path):
    path = tmp_path / "m.npz"
    save_checkpoint(_snapshot_model(), path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, _graph(seed=4))


def test_checkpoint_not_a_zip(tmp_path):
    path = tmp_path / "m.npz"
    path.write_text("hello")
    with pytest.raises(CheckpointError):
        read_checkpoint(path)
