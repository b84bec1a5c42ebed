import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiketext import ann
from spiketext.ann import AnnTrainConfig, CnnConfig, CnnParams


def naive_scores(params, config, x):
    """Loop-level reference forward pass for one (L, D) sequence."""
    L, D = x.shape
    pooled = []
    for w in config.filter_widths:
        k = params.conv(w)
        b = params.bias(ann.conv_bias_key(w))
        acts = np.zeros((L - w + 1, config.feature_maps))
        for f in range(config.feature_maps):
            for t in range(L - w + 1):
                z = sum(k[f, j, d] * x[t + j, d] for j in range(w) for d in range(D))
                if b is not None:
                    z += b[f]
                acts[t, f] = max(z, 0.0) if config.activation == "relu" else 1 / (1 + np.exp(-z))
        pooled.extend(acts.mean(0) if config.pooling == "avg" else acts.max(0))
    pooled = np.array(pooled)
    logits = params.fc @ pooled
    if params.bias("fc_bias") is not None:
        logits = logits + params.bias("fc_bias")
    h = config.neurons_per_class
    return np.array([logits[c * h:(c + 1) * h].sum() for c in range(config.num_classes)])


def _small(seed, **kw):
    base = dict(num_classes=3, embed_dim=3, filter_widths=(1, 2), feature_maps=2,
                neurons_per_class=2, dropout=0.0)
    base.update(kw)
    cfg = CnnConfig(**base)
    params = ann.init_params(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    for k in params.tensors:
        params.tensors[k] = rng.normal(0, 1, params.tensors[k].shape)
    return cfg, params


def test_hand_example():
    cfg = CnnConfig(num_classes=1, embed_dim=1, filter_widths=(2,), feature_maps=1,
                    neurons_per_class=1)
    params = CnnParams({"conv2": np.ones((1, 2, 1)), "fc": np.ones((1, 1))})
    x = np.array([[1.0], [0.0], [1.0]])
    scores, cache = ann.forward(params, cfg, x)
    np.testing.assert_array_equal(cache.act[2][0, :, 0], [1.0, 1.0])
    np.testing.assert_array_equal(cache.pooled[0], [1.0])
    np.testing.assert_array_equal(scores, [1.0])


def test_zero_parameters_give_zero_scores():
    cfg = CnnConfig(num_classes=2, embed_dim=4, feature_maps=3)
    params = ann.init_params(cfg)
    for v in params.tensors.values():
        v[...] = 0
    x = np.random.default_rng(0).random((2, 7, 4)).astype(np.float32)
    scores, _ = ann.forward(params, cfg, x)
    np.testing.assert_array_equal(scores, 0.0)


@pytest.mark.parametrize("variant", [
    {}, {"pooling": "max"}, {"use_bias": True}, {"activation": "sigmoid"},
    {"pooling": "max", "use_bias": True},
])
def test_forward_matches_naive_loops(variant):
    cfg, params = _small(1, **variant)
    x = np.random.default_rng(2).random((5, 3))
    scores, _ = ann.forward(params, cfg, x)
    np.testing.assert_allclose(scores, naive_scores(params, cfg, x), rtol=1e-12, atol=1e-12)


def numeric_grads(params, cfg, x, weights, eps=1e-6):
    def loss():
        return float(sum((naive_scores(params, cfg, xi) * wi).sum() for xi, wi in zip(x, weights)))
    out = {}
    for k, v in params.tensors.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            orig = v[idx]
            v[idx] = orig + eps
            up = loss()
            v[idx] = orig - eps
            down = loss()
            v[idx] = orig
            g[idx] = (up - down) / (2 * eps)
        out[k] = g
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = loss()
        x[idx] = orig - eps
        down = loss()
        x[idx] = orig
        gx[idx] = (up - down) / (2 * eps)
    return out, gx


def rel_error(a, n, floor=1e-6):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


@pytest.mark.parametrize("variant", [{}, {"pooling": "max", "use_bias": True}, {"activation": "sigmoid"}])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backward_matches_central_differences(variant, seed):
    cfg, params = _small(seed, **variant)
    rng = np.random.default_rng(seed + 7)
    x = rng.random((2, 4, 3))
    weights = rng.normal(size=(2, cfg.num_classes))
    _, cache = ann.forward(params, cfg, x)
    grads, dx = ann.backward(cache, params, cfg, weights)
    num, num_x = numeric_grads(params, cfg, x, weights)
    for k in params.tensors:
        assert rel_error(grads[k], num[k]) < 1e-4, k
    assert rel_error(dx, num_x) < 1e-4


def test_avg_pool_gradient_uniform_within_map():
    cfg, params = _small(0, num_classes=2, filter_widths=(1,), feature_maps=3)
    params.tensors["conv1"] = np.abs(params.tensors["conv1"])
    x = np.random.default_rng(0).random((1, 6, 3)) + 0.1
    _, cache = ann.forward(params, cfg, x)
    d_scores = np.array([[1.0, -0.5]])
    # every position receives d_pooled / P into every active unit
    d_pooled = np.repeat(d_scores, cfg.neurons_per_class, axis=-1) @ params.fc
    _, dx = ann.backward(cache, params, cfg, d_scores)
    expected = (d_pooled / 6) @ params.tensors["conv1"][:, 0, :]
    np.testing.assert_allclose(dx[0], np.broadcast_to(expected, (6, 3)), rtol=1e-12)


def test_zero_upstream_gives_zero_gradients():
    cfg, params = _small(3, pooling="max", use_bias=True)
    x = np.random.default_rng(0).random((2, 4, 3))
    _, cache = ann.forward(params, cfg, x)
    grads, dx = ann.backward(cache, params, cfg, np.zeros((2, cfg.num_classes)))
    for g in grads.values():
        np.testing.assert_array_equal(g, 0.0)
    np.testing.assert_array_equal(dx, 0.0)


def test_relu_then_average_is_not_average_then_relu():
    acts = np.array([2.0, -1.0, 0.5])
    assert np.maximum(acts, 0).mean() != max(acts.mean(), 0)
    pos = np.array([2.0, 1.0, 0.5])
    assert np.maximum(pos, 0).mean() == max(pos.mean(), 0)


def test_group_sum_layout():
    units = np.arange(6.0)
    np.testing.assert_array_equal(ann.group_sum(units, 2), [3.0, 12.0])


def test_predict_tie_goes_to_lowest_class():
    cfg = CnnConfig(num_classes=3, embed_dim=2, filter_widths=(1,), feature_maps=1)
    params = ann.init_params(cfg)
    params.tensors["fc"][...] = 0
    assert ann.predict(params, cfg, np.ones((3, 2), np.float32)) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=5), st.data())
def test_cross_entropy_is_negative_log_probability(scores, data):
    target = data.draw(st.integers(0, len(scores) - 1))
    s = np.array(scores)
    loss, grad = ann.cross_entropy(s, [target])
    p = np.exp(s - s.max()) / np.exp(s - s.max()).sum()
    assert loss >= 0
    assert loss == pytest.approx(-np.log(p[target]), rel=1e-9, abs=1e-12)
    assert grad.sum() == pytest.approx(0.0, abs=1e-9)


def test_dropout_mask_inverted_scaling():
    m = ann.dropout_mask(np.random.default_rng(0), (100000,), 0.5)
    assert set(np.unique(m)) == {0.0, 2.0}
    assert m.mean() == pytest.approx(1.0, abs=0.02)


def test_short_sequence_rejected():
    cfg = CnnConfig(embed_dim=2, filter_widths=(3,), feature_maps=1)
    with pytest.raises(ann.ShapeError):
        ann.forward(ann.init_params(cfg), cfg, np.zeros((2, 2), np.float32))


def _train(toy_encoded, opts, cfg=None):
    ds, _, table = toy_encoded
    cfg = cfg or CnnConfig(num_classes=2, embed_dim=8, filter_widths=(1, 2), feature_maps=4,
                           neurons_per_class=2, dropout=0.0)
    return cfg, ann.train_ann(cfg, ann.init_params(cfg, seed=0), ds, table, opts)


def test_training_fits_separable_toy(toy_encoded):
    _, (params, table, hist) = _train(toy_encoded, AnnTrainConfig(lr=1e-2, batch_size=8, epochs=50))
    assert hist[-1]["train_acc"] == 1.0
    assert table.matrix.min() >= 0 and table.matrix.max() <= 1
    np.testing.assert_array_equal(table.matrix[0], 0.0)


def test_zero_learning_rate_leaves_weights(toy_encoded):
    ds, _, table = toy_encoded
    cfg = CnnConfig(num_classes=2, embed_dim=8, filter_widths=(1, 2), feature_maps=4)
    init = ann.init_params(cfg, seed=0)
    params, new_table, _ = ann.train_ann(cfg, init, ds, table, AnnTrainConfig(lr=0.0, epochs=2))
    for k in init.tensors:
        np.testing.assert_array_equal(params.tensors[k], init.tensors[k])
    np.testing.assert_array_equal(new_table.matrix, table.matrix)


def test_training_is_deterministic(toy_encoded):
    opts = AnnTrainConfig(lr=1e-2, batch_size=8, epochs=3)
    cfg = CnnConfig(num_classes=2, embed_dim=8, filter_widths=(1, 2), feature_maps=4,
                    neurons_per_class=2, dropout=0.5)
    _, (p1, t1, h1) = _train(toy_encoded, opts, cfg)
    _, (p2, t2, h2) = _train(toy_encoded, opts, cfg)
    assert h1 == h2
    for k in p1.tensors:
        np.testing.assert_array_equal(p1.tensors[k], p2.tensors[k])
    np.testing.assert_array_equal(t1.matrix, t2.matrix)


def test_config_record_round_trip():
    cfg = CnnConfig.original_textcnn(num_classes=5, filter_widths=(2, 3))
    assert CnnConfig.from_record(cfg.to_record()) == cfg
    assert not cfg.tailored and CnnConfig.tailored_textcnn().tailored
