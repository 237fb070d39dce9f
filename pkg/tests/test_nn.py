"""Network engine: hand-computed forwards, finite-difference gradients,
optimizer arithmetic, and the two reference architectures."""

import numpy as np
import pytest

from audiolrp.errors import ConfigError, NumericError, ShapeError
from audiolrp.nn import (
    LayerSpec,
    Model,
    ModelSpec,
    TrainConfig,
    backward,
    build_alexnet_variant,
    build_audionet,
    conv1d,
    conv2d,
    dense,
    dropout,
    fit,
    flatten,
    forward,
    learning_rate,
    maxpool1d,
    maxpool2d,
    predict,
    relu,
    sgd_step,
    softmax_cross_entropy,
)


def make_model(layers, input_shape, n_classes, seed=0, dtype=np.float64):
    spec = ModelSpec(layers=layers, input_shape=input_shape, n_classes=n_classes)
    return Model.initialize(spec, seed=seed, dtype=dtype)


def test_dense_forward_hand_example():
    model = make_model([dense(2)], (2,), 2)
    model.params["layer0.weight"][:] = [[1.0, 2.0], [3.0, 4.0]]
    model.params["layer0.bias"][:] = [0.5, -0.5]
    logits, _ = forward(model, np.array([1.0, 1.0]))
    assert np.allclose(logits, [3.5, 6.5])


def test_dense_relu_clamps_negative():
    model = make_model([dense(2, "relu"), dense(2)], (2,), 2)
    model.params["layer0.weight"][:] = [[1.0, 0.0], [-1.0, 0.0]]
    model.params["layer0.bias"][:] = 0.0
    model.params["layer1.weight"][:] = np.eye(2)
    model.params["layer1.bias"][:] = 0.0
    logits, _ = forward(model, np.array([2.0, 0.0]))
    assert np.allclose(logits, [2.0, 0.0])


def test_forward_batch_matches_single():
    model = make_model([conv1d(3, 3, 1, 1), maxpool1d(), dense(2)], (8, 1), 2, seed=3)
    x = np.random.default_rng(0).normal(size=(4, 8, 1))
    batched, _ = forward(model, x)
    for i in range(4):
        single, _ = forward(model, x[i])
        assert np.allclose(single, batched[i])


def test_forward_rejects_wrong_shape():
    model = make_model([dense(2)], (5,), 2)
    with pytest.raises(ShapeError):
        forward(model, np.zeros(4))


def test_forward_nonfinite_raises():
    model = make_model([dense(2)], (3,), 2)
    model.params["layer0.weight"][0, 0] = np.inf
    with pytest.raises(NumericError):
        forward(model, np.ones(3))


def test_spec_rejects_bad_chaining():
    with pytest.raises(ShapeError):
        ModelSpec(layers=[conv2d(4, 3), dense(2)], input_shape=(16, 1), n_classes=2)
    with pytest.raises(ShapeError):
        ModelSpec(layers=[dense(3)], input_shape=(4,), n_classes=2)
    with pytest.raises(ShapeError):
        ModelSpec(layers=[conv1d(2, kernel=9), dense(2)], input_shape=(4, 1),
                  n_classes=2)


def test_layerspec_validation():
    with pytest.raises(ConfigError):
        LayerSpec("Wibble")
    with pytest.raises(ConfigError):
        conv1d(0)
    with pytest.raises(ConfigError):
        dense(3, activation="tanh")
    with pytest.raises(ConfigError):
        dropout(1.0)


def test_spec_roundtrips_through_dict():
    spec = ModelSpec(layers=[conv1d(3, 3, 1, 1), maxpool1d(), dense(4, "relu"),
                             dropout(0.3), dense(2)],
                     input_shape=(8, 1), n_classes=2, name="tiny")
    again = ModelSpec.from_dict(spec.to_dict())
    assert again == spec


GRAD_CASES = {
    "dense": ([dense(4, "relu"), dense(3)], (5,), 3),
    "conv1d": ([conv1d(3, 3, 1, 1), dense(2)], (12, 2), 2),
    "conv1d_strided": ([conv1d(3, 5, 2, 2), maxpool1d(2, 2), dense(3)], (16, 1), 3),
    "conv2d": ([conv2d(2, 3, 2, 1), maxpool2d(2, 2), dense(2)], (8, 8, 1), 2),
    "explicit_layers": ([flatten(), dense(6), relu(), dropout(0.0), dense(2)],
                        (3, 2), 2),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
@pytest.mark.parametrize("seed", [0, 1])
def test_param_gradients_match_finite_differences(name, seed):
    layers, input_shape, n_classes = GRAD_CASES[name]
    model = make_model(layers, input_shape, n_classes, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for pname, p in model.params.items():
        if pname.endswith(".bias"):
            p[:] = rng.normal(0, 0.1, size=p.shape)
    x = rng.normal(size=input_shape)
    y = int(rng.integers(n_classes))
    logits, trace = forward(model, x, record_trace=True)
    _, g = softmax_cross_entropy(logits, y)
    grads = backward(model, trace, g)
    h = 1e-6
    for pname, p in model.params.items():
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            p[i] += h
            up = softmax_cross_entropy(forward(model, x)[0], y)[0]
            p[i] -= 2 * h
            dn = softmax_cross_entropy(forward(model, x)[0], y)[0]
            p[i] += h
            assert abs((up - dn) / (2 * h) - grads[pname][i]) < 1e-6, pname


def test_softmax_hand_values():
    loss, grad = softmax_cross_entropy(np.array([0.0, 0.0]), 0)
    assert np.isclose(loss, np.log(2))
    assert np.allclose(grad, [-0.5, 0.5])
    loss, _ = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
    assert loss < 1e-12  # no overflow for large logits
    with pytest.raises(ConfigError):
        softmax_cross_entropy(np.zeros(3), 5)


def test_softmax_batch_mean_and_grad_scaling():
    z = np.array([[1.0, -1.0], [0.5, 0.5]])
    y = np.array([0, 1])
    loss, grad = softmax_cross_entropy(z, y)
    l0, g0 = softmax_cross_entropy(z[0], y[0])
    l1, g1 = softmax_cross_entropy(z[1], y[1])
    assert np.isclose(loss, (l0 + l1) / 2)
    assert np.allclose(grad, np.stack([g0, g1]) / 2)


def test_learning_rate_halves():
    cfg = TrainConfig(learning_rate=0.1, halving_interval=100)
    assert learning_rate(cfg, 0) == 0.1
    assert learning_rate(cfg, 99) == 0.1
    assert learning_rate(cfg, 100) == 0.05
    assert learning_rate(cfg, 250) == 0.025


def test_sgd_step_clips_and_accumulates_momentum():
    cfg = TrainConfig(learning_rate=0.1, momentum=0.5, clip=5.0,
                      halving_interval=1000)
    params = {"w": np.array([1.0])}
    state = {}
    sgd_step(params, {"w": np.array([10.0])}, cfg, state, 0)
    assert np.isclose(params["w"][0], 1.0 - 0.1 * 5.0)  # clipped to 5
    sgd_step(params, {"w": np.array([1.0])}, cfg, state, 1)
    # v1 = -0.5, v2 = 0.5*(-0.5) - 0.1*1 = -0.35
    assert np.isclose(params["w"][0], 0.5 - 0.35)


def test_sgd_no_momentum_is_plain_descent():
    cfg = TrainConfig(learning_rate=0.2, momentum=0.0, clip=5.0)
    params = {"w": np.array([2.0])}
    sgd_step(params, {"w": np.array([1.0])}, cfg, {}, 0)
    assert np.isclose(params["w"][0], 2.0 - 0.2)


def test_initialize_deterministic_and_bounded():
    spec = ModelSpec(layers=[conv1d(4, 3, 1, 1), maxpool1d(), dense(3)],
                     input_shape=(8, 2), n_classes=3)
    a = Model.initialize(spec, seed=7)
    b = Model.initialize(spec, seed=7)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    w = a.params["layer0.weight"]
    assert np.abs(w).max() <= np.sqrt(6.0 / (2 * 3))
    assert np.all(a.params["layer0.bias"] == 0)
    assert np.all(a.params["layer2.bias"] == 0)


def test_dropout_train_eval_behaviour():
    model = make_model([dropout(0.5), dense(2)], (100,), 2)
    model.params["layer1.weight"][:] = 1.0
    x = np.ones(100)
    eval_logits, _ = forward(model, x)
    train_logits, trace = forward(model, x, record_trace=True, train_mode=True,
                                  rng=np.random.default_rng(0))
    mask = trace.entries[0]["mask"]
    kept = np.count_nonzero(mask)
    assert 30 < kept < 70
    assert np.allclose(np.unique(mask), [0.0, 2.0])  # inverted dropout scale
    assert not np.allclose(eval_logits, train_logits)
    with pytest.raises(ConfigError):
        forward(model, x, train_mode=True)


def test_fit_learns_and_is_deterministic(each_backend):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 6)).astype(np.float32)
    w_true = rng.normal(size=(6, 2))
    y = np.argmax(x @ w_true, axis=1)
    cfg = TrainConfig(learning_rate=0.05, momentum=0.9, batch_size=20,
                      iterations=200, halving_interval=150, seed=11)

    def run():
        model = make_model([dense(8, "relu"), dense(2)], (6,), 2, seed=2,
                           dtype=np.float32)
        hist = fit(model, x, y, cfg, x_val=x, y_val=y, eval_every=50)
        return model, hist

    m1, h1 = run()
    m2, h2 = run()
    assert h1[-1][3] >= 0.95
    assert h1 == h2
    for k in m1.params:
        assert np.array_equal(m1.params[k], m2.params[k])


def test_predict_batches_match_forward():
    model = make_model([dense(3)], (4,), 3, seed=1)
    x = np.random.default_rng(2).normal(size=(7, 4))
    preds = predict(model, x, batch_size=3)
    logits, _ = forward(model, x)
    assert np.array_equal(preds, np.argmax(logits, axis=1))


def test_audionet_shape_contract():
    spec = build_audionet(10, width_scale=1.0)
    assert len(spec.layers) == 15
    assert spec.input_shape == (8000, 1)
    shapes = spec.layer_shapes()
    # last pooling stage leaves 128 channels x 125 positions = 16000 inputs
    assert shapes[11] == (128, 125)
    assert spec.param_shapes()["layer12.weight"] == (1024, 16000)
    assert shapes[-1] == (10,)


def test_audionet_width_scaling():
    spec = build_audionet(10, width_scale=0.25)
    assert spec.layers[0].channels == 25
    assert spec.param_shapes()["layer12.weight"][0] == 256


def test_alexnet_variant_shape_contract():
    spec = build_alexnet_variant(10)
    assert len(spec.layers) == 13
    assert spec.input_shape == (227, 227, 1)
    # conv stack ends at 6x6x256 = 9216 features
    assert spec.param_shapes()["layer8.weight"] == (1024, 9216)
    kinds = [s.kind for s in spec.layers]
    assert kinds.count("Dropout") == 2
    assert spec.layer_shapes()[-1] == (10,)
