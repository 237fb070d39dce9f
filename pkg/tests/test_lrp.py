"""Relevance propagation rules: hand examples, an unrolled-dense oracle
for the convolutional rule, and conservation checks."""

import numpy as np
import pytest

from audiolrp import kernels
from audiolrp.errors import ConfigError
from audiolrp.lrp import (
    LrpConfig,
    explain,
    init_output_relevance,
    lrp_conv1d,
    lrp_conv2d,
    lrp_dense,
    lrp_maxpool1d,
)
from audiolrp.nn import (
    Model,
    ModelSpec,
    conv1d,
    conv2d,
    dense,
    dropout,
    forward,
    maxpool1d,
    maxpool2d,
)

EXACT = LrpConfig(epsilon=0.0)


def test_init_output_relevance_modes():
    logits = np.array([1.5, -2.0, 0.25])
    r = init_output_relevance(logits, 2)
    assert np.array_equal(r, [0.0, 0.0, 0.25])
    r = init_output_relevance(logits, 1, mode="unit")
    assert np.array_equal(r, [0.0, 1.0, 0.0])
    with pytest.raises(ConfigError):
        init_output_relevance(logits, 3)


def test_dense_identity_passthrough():
    x = np.array([1.0, 3.0])
    r = lrp_dense(x, np.eye(2), None, np.array([1.0, 3.0]), EXACT)
    assert np.allclose(r, [1.0, 3.0])


def test_dense_proportional_split():
    # one output neuron: relevance splits in proportion to x_i * w_i
    x = np.array([1.0, 3.0])
    w = np.array([[1.0], [1.0]])
    r = lrp_dense(x, w, None, np.array([8.0]), EXACT)
    assert np.allclose(r, [2.0, 6.0])
    assert np.isclose(r.sum(), 8.0)


def test_dense_zero_denominator_routes_zero():
    x = np.array([1.0, -1.0])
    w = np.array([[1.0], [1.0]])  # denominator exactly 0
    r = lrp_dense(x, w, None, np.array([5.0]), EXACT)
    assert np.all(r == 0)


def test_dense_conservation_random(rng):
    x = rng.normal(size=6)
    w = rng.normal(size=(6, 4))
    r_out = rng.normal(size=4)
    r_in = lrp_dense(x, w, None, r_out, EXACT)
    assert np.isclose(r_in.sum(), r_out.sum(), rtol=1e-12)


def test_dense_distribute_restores_conservation(rng):
    x = rng.normal(size=5)
    w = rng.normal(size=(5, 3))
    b = rng.normal(size=3)
    r_out = rng.normal(size=3)
    absorbed = lrp_dense(x, w, b, r_out, LrpConfig(epsilon=0.0, bias_mode="absorb"))
    spread = lrp_dense(x, w, b, r_out, LrpConfig(epsilon=0.0, bias_mode="distribute"))
    assert not np.isclose(absorbed.sum(), r_out.sum())
    assert np.isclose(spread.sum(), r_out.sum(), rtol=1e-10)


def unroll_conv1d(w, in_shape, stride, padding):
    """Equivalent dense matrix (c*l inputs, o*lo outputs) for a 1-D conv."""
    c, l = in_shape
    basis = np.eye(c * l).reshape(c * l, c, l)
    y = kernels.conv1d_forward(basis, w, stride, padding)
    return y.reshape(c * l, -1)


@pytest.mark.parametrize("epsilon", [0.0, 1e-6])
@pytest.mark.parametrize("with_bias", [False, True])
def test_conv1d_matches_unrolled_dense(rng, epsilon, with_bias):
    x = rng.normal(size=(1, 2, 8))
    w = rng.normal(size=(3, 2, 3))
    b = rng.normal(size=3) if with_bias else None
    r_out = rng.normal(size=(1, 3, 8))
    cfg = LrpConfig(epsilon=epsilon)
    got = lrp_conv1d(x, w, b, r_out, stride=1, padding=1, cfg=cfg)
    wd = unroll_conv1d(w, (2, 8), 1, 1)
    bd = np.repeat(b, 8) if with_bias else None
    ref = lrp_dense(x.reshape(-1), wd, bd, r_out.reshape(-1), cfg)
    assert np.allclose(got.reshape(-1), ref, atol=1e-10)


def test_conv2d_matches_unrolled_dense(rng):
    x = rng.normal(size=(1, 1, 5, 5))
    w = rng.normal(size=(2, 1, 3, 3))
    r_out = rng.normal(size=(1, 2, 3, 3))
    got = lrp_conv2d(x, w, None, r_out, stride=1, padding=0, cfg=EXACT)
    basis = np.eye(25).reshape(25, 1, 5, 5)
    wd = kernels.conv2d_forward(basis, w, 1, 0).reshape(25, -1)
    ref = lrp_dense(x.reshape(-1), wd, None, r_out.reshape(-1), EXACT)
    assert np.allclose(got.reshape(-1), ref, atol=1e-10)


def test_maxpool_routes_winner_take_all():
    x = np.array([[[1.0, 5.0, 2.0, 3.0]]])
    _, idx = kernels.maxpool1d_forward(x, 2, 2)
    r = lrp_maxpool1d(idx, np.array([[[2.0, 7.0]]]), 4, 2, 2)
    assert np.allclose(r, [[[0.0, 2.0, 0.0, 7.0]]])


def trained_toy(seed=0, dtype=np.float64, zero_bias=True):
    spec = ModelSpec(
        layers=[conv1d(4, 3, 1, 1), maxpool1d(), conv1d(6, 3, 1, 1),
                maxpool1d(), dense(8, "relu"), dense(3)],
        input_shape=(16, 1), n_classes=3)
    model = Model.initialize(spec, seed=seed, dtype=dtype)
    if not zero_bias:
        rng = np.random.default_rng(seed + 1)
        for name, p in model.params.items():
            if name.endswith(".bias"):
                p[:] = rng.normal(0, 0.2, size=p.shape).astype(dtype)
    return model


def test_explain_conserves_total(rng):
    model = trained_toy()
    x = rng.normal(size=(16, 1))
    logits, trace = forward(model, x, record_trace=True)
    target = int(np.argmax(logits))
    rmap = explain(model, trace, target, EXACT)
    assert rmap.values.shape == (16, 1)
    assert abs(rmap.total - logits[target]) <= 1e-9 * abs(logits[target])


def test_explain_conserves_with_distributed_bias(rng):
    model = trained_toy(zero_bias=False)
    x = rng.normal(size=(16, 1))
    logits, trace = forward(model, x, record_trace=True)
    cfg = LrpConfig(epsilon=0.0, bias_mode="distribute")
    rmap = explain(model, trace, int(np.argmax(logits)), cfg)
    assert abs(rmap.total - logits[np.argmax(logits)]) <= 1e-9


def test_explain_scale_invariant_distribution(rng):
    # zero-bias ReLU nets: scaling the input by c > 0 leaves unit-mode
    # relevance unchanged
    model = trained_toy()
    x = rng.normal(size=(16, 1))
    cfg = LrpConfig(epsilon=0.0, init_mode="unit")
    _, t1 = forward(model, x, record_trace=True)
    _, t2 = forward(model, 3.0 * x, record_trace=True)
    r1 = explain(model, t1, 0, cfg)
    r2 = explain(model, t2, 0, cfg)
    assert np.allclose(r1.values, r2.values, atol=1e-10)


def test_explain_targets_differ(rng):
    model = trained_toy()
    x = rng.normal(size=(16, 1))
    _, trace = forward(model, x, record_trace=True)
    cfg = LrpConfig(epsilon=0.0, init_mode="unit")
    r0 = explain(model, trace, 0, cfg)
    r1 = explain(model, trace, 1, cfg)
    assert not np.allclose(r0.values, r1.values)
    assert r0.target == 0 and r1.target == 1


def test_explain_counts_zero_denominators():
    spec = ModelSpec(layers=[dense(2, bias=False)], input_shape=(2,), n_classes=2)
    model = Model.initialize(spec, seed=0, dtype=np.float64)
    model.params["layer0.weight"][:] = [[1.0, 1.0], [0.0, 1.0]]
    _, trace = forward(model, np.array([1.0, -1.0]), record_trace=True)
    rmap = explain(model, trace, 0, LrpConfig(epsilon=0.0, init_mode="unit"))
    assert rmap.zero_denominators == 1
    assert np.all(rmap.values == 0)


def test_explain_2d_model_shapes(rng):
    spec = ModelSpec(
        layers=[conv2d(3, 3, 1, 1), maxpool2d(2, 2), dropout(0.2), dense(2)],
        input_shape=(8, 8, 1), n_classes=2)
    model = Model.initialize(spec, seed=2, dtype=np.float64)
    x = rng.normal(size=(8, 8, 1))
    logits, trace = forward(model, x, record_trace=True)
    rmap = explain(model, trace, 0, EXACT)
    assert rmap.values.shape == (8, 8, 1)
    assert abs(rmap.total - logits[0]) <= 1e-9 * max(abs(logits[0]), 1e-12)


def test_explain_rejects_bad_traces(rng):
    model = trained_toy()
    with pytest.raises(ConfigError):
        explain(model, None, 0)
    spec = ModelSpec(layers=[dropout(0.5), dense(2)], input_shape=(4,), n_classes=2)
    m2 = Model.initialize(spec, seed=0)
    _, trace = forward(m2, np.ones(4), record_trace=True, train_mode=True,
                       rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        explain(m2, trace, 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        LrpConfig(epsilon=-1.0)
    with pytest.raises(ConfigError):
        LrpConfig(bias_mode="ignore")
    with pytest.raises(ConfigError):
        LrpConfig(init_mode="max")
