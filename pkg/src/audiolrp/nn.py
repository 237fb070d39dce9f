"""Minimal dense-tensor CNN engine.

Declarative ``ModelSpec``/``LayerSpec`` architectures with a fixed layer
vocabulary (1-D/2-D convolution, max pooling, dense, ReLU, flatten,
dropout), explicit forward/backward passes over recorded traces,
softmax cross-entropy, and momentum SGD with step-wise LR halving.

Conventions:
  * model input shapes are channels-last, e.g. ``(8000, 1)`` or
    ``(227, 227, 1)``; internally tensors are batched channels-first
  * ``Conv1D``/``Conv2D``/``Dense`` layers may fold a ReLU via their
    ``activation`` field; ``Dense`` flattens its input row-major by
    contract
  * all shape inconsistencies are raised at ``ModelSpec`` construction
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, NumericError, ShapeError

LAYER_KINDS = (
    "Conv1D",
    "Conv2D",
    "MaxPool1D",
    "MaxPool2D",
    "Dense",
    "ReLU",
    "Flatten",
    "Dropout",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    units: int = 0
    p: float = 0.5
    activation: str = "linear"
    bias: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.activation not in ("linear", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.kind in ("Conv1D", "Conv2D"):
            if self.kernel < 1 or self.channels < 1:
                raise ConfigError("conv layers need kernel >= 1 and channels >= 1")
            if self.padding < 0:
                raise ConfigError("padding must be >= 0")
        if self.kind in ("MaxPool1D", "MaxPool2D") and self.kernel < 1:
            raise ConfigError("pool layers need kernel >= 1")
        if self.kind == "Dense" and self.units < 1:
            raise ConfigError("dense layers need units >= 1")
        if self.kind == "Dropout" and not 0.0 <= self.p < 1.0:
            raise ConfigError("dropout probability must be in [0, 1)")

    def has_params(self) -> bool:
        return self.kind in ("Conv1D", "Conv2D", "Dense")


def conv1d(channels, kernel=3, stride=1, padding=0, activation="relu", bias=True):
    return LayerSpec("Conv1D", channels=channels, kernel=kernel, stride=stride,
                     padding=padding, activation=activation, bias=bias)


def conv2d(channels, kernel, stride=1, padding=0, activation="relu", bias=True):
    return LayerSpec("Conv2D", channels=channels, kernel=kernel, stride=stride,
                     padding=padding, activation=activation, bias=bias)


def maxpool1d(kernel=2, stride=2):
    return LayerSpec("MaxPool1D", kernel=kernel, stride=stride)


def maxpool2d(kernel, stride):
    return LayerSpec("MaxPool2D", kernel=kernel, stride=stride)


def dense(units, activation="linear", bias=True):
    return LayerSpec("Dense", units=units, activation=activation, bias=bias)


def relu():
    return LayerSpec("ReLU")


def flatten():
    return LayerSpec("Flatten")


def dropout(p=0.5):
    return LayerSpec("Dropout", p=p)


def _internal_input_shape(input_shape):
    # channels-last public shape -> channels-first internal shape
    shape = tuple(int(s) for s in input_shape)
    if any(s < 1 for s in shape):
        raise ShapeError(f"input shape must be positive, got {shape}")
    if len(shape) == 1:
        return shape
    if len(shape) == 2:  # (L, C)
        return (shape[1], shape[0])
    if len(shape) == 3:  # (H, W, C)
        return (shape[2], shape[0], shape[1])
    raise ShapeError(f"unsupported input rank {len(shape)}")


def _out_extent(extent, kernel, stride, padding):
    out = (extent + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ShapeError(
            f"kernel {kernel} stride {stride} padding {padding} "
            f"does not fit extent {extent}"
        )
    return out


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple
    n_classes: int
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        shapes = self.layer_shapes()
        final = shapes[-1]
        if final != (self.n_classes,):
            raise ShapeError(
                f"final layer produces shape {final}, expected ({self.n_classes},)"
            )

    def layer_shapes(self):
        """Internal (channels-first) shape after each layer; validates chaining."""
        shape = _internal_input_shape(self.input_shape)
        shapes = []
        for spec in self.layers:
            if spec.kind == "Conv1D":
                if len(shape) != 2:
                    raise ShapeError(f"Conv1D expects (C, L) input, got {shape}")
                c, length = shape
                shape = (spec.channels, _out_extent(length, spec.kernel, spec.stride, spec.padding))
            elif spec.kind == "Conv2D":
                if len(shape) != 3:
                    raise ShapeError(f"Conv2D expects (C, H, W) input, got {shape}")
                c, h, w = shape
                shape = (
                    spec.channels,
                    _out_extent(h, spec.kernel, spec.stride, spec.padding),
                    _out_extent(w, spec.kernel, spec.stride, spec.padding),
                )
            elif spec.kind == "MaxPool1D":
                if len(shape) != 2:
                    raise ShapeError(f"MaxPool1D expects (C, L) input, got {shape}")
                shape = (shape[0], _out_extent(shape[1], spec.kernel, spec.stride, 0))
            elif spec.kind == "MaxPool2D":
                if len(shape) != 3:
                    raise ShapeError(f"MaxPool2D expects (C, H, W) input, got {shape}")
                shape = (
                    shape[0],
                    _out_extent(shape[1], spec.kernel, spec.stride, 0),
                    _out_extent(shape[2], spec.kernel, spec.stride, 0),
                )
            elif spec.kind == "Dense":
                shape = (spec.units,)
            elif spec.kind == "Flatten":
                shape = (int(np.prod(shape)),)
            # ReLU / Dropout keep the shape
            shapes.append(shape)
        return shapes

    def param_shapes(self):
        """Mapping parameter name -> shape, in layer order."""
        shape = _internal_input_shape(self.input_shape)
        out = {}
        for i, (spec, after) in enumerate(zip(self.layers, self.layer_shapes())):
            if spec.kind == "Conv1D":
                out[f"layer{i}.weight"] = (spec.channels, shape[0], spec.kernel)
            elif spec.kind == "Conv2D":
                out[f"layer{i}.weight"] = (spec.channels, shape[0], spec.kernel, spec.kernel)
            elif spec.kind == "Dense":
                out[f"layer{i}.weight"] = (spec.units, int(np.prod(shape)))
            if spec.has_params() and spec.bias:
                out[f"layer{i}.bias"] = (spec.units or spec.channels,)
            shape = after
        return out

    def to_dict(self):
        layers = []
        for s in self.layers:
            layers.append({
                "kind": s.kind, "channels": s.channels, "kernel": s.kernel,
                "stride": s.stride, "padding": s.padding, "units": s.units,
                "p": s.p, "activation": s.activation, "bias": s.bias,
            })
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, d):
        layers = tuple(LayerSpec(**ld) for ld in d["layers"])
        return cls(layers=layers, input_shape=tuple(d["input_shape"]),
                   n_classes=int(d["n_classes"]), name=d.get("name", "custom"))


@dataclass
class ActivationTrace:
    """Per-layer inputs and auxiliary maps from one recorded forward pass."""

    entries: list
    x: np.ndarray  # normalized internal input, batched
    single: bool
    train_mode: bool


class Model:
    """A ModelSpec plus its learned parameters."""

    def __init__(self, spec: ModelSpec, params: dict, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        expected = spec.param_shapes()
        if set(params) != set(expected):
            raise ShapeError("parameter set does not match architecture")
        for name, arr in params.items():
            if tuple(arr.shape) != expected[name]:
                raise ShapeError(
                    f"{name}: shape {arr.shape} != expected {expected[name]}"
                )
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}

    @classmethod
    def initialize(cls, spec: ModelSpec, seed=0, dtype=np.float32, zero_bias=True):
        """Kaiming-uniform weights (fan-in scaling), zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        params = {}
        for name, shape in spec.param_shapes().items():
            if name.endswith(".bias"):
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = np.sqrt(6.0 / fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        return cls(spec, params, dtype=dtype)

    def astype(self, dtype):
        out = Model.__new__(Model)
        out.spec = self.spec
        out.dtype = np.dtype(dtype)
        out.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return out


def _normalize_input(x, input_shape, dtype):
    x = np.asarray(x, dtype=dtype)
    target = tuple(input_shape)
    if x.shape == target:
        x = x[None]
        single = True
    elif x.ndim == len(target) + 1 and x.shape[1:] == target:
        single = False
    else:
        raise ShapeError(f"input shape {x.shape} does not match model input {target}")
    if len(target) >= 2:
        x = np.moveaxis(x, -1, 1)
    return np.ascontiguousarray(x), single


def forward(model: Model, x, record_trace=False, train_mode=False, rng=None):
    """Run the network; returns ``(logits, trace_or_None)``.

    Dropout is active only in ``train_mode`` (inverted dropout, drawn
    from ``rng``).
    """
    x, single = _normalize_input(x, model.spec.input_shape, model.dtype)
    if train_mode and rng is None:
        if any(s.kind == "Dropout" and s.p > 0 for s in model.spec.layers):
            raise ConfigError("train_mode forward with dropout requires an rng")
    entries = [] if record_trace else None
    trace_x = x
    for i, spec in enumerate(model.spec.layers):
        entry = {"x": x} if record_trace else None
        if spec.kind == "Conv1D":
            w = model.params[f"layer{i}.weight"]
            pre = kernels.conv1d_forward(x, w, spec.stride, spec.padding)
            if spec.bias:
                pre = pre + model.params[f"layer{i}.bias"][None, :, None]
            out = np.maximum(pre, 0) if spec.activation == "relu" else pre
            if record_trace:
                entry["pre"] = pre
        elif spec.kind == "Conv2D":
            w = model.params[f"layer{i}.weight"]
            pre = kernels.conv2d_forward(x, w, spec.stride, spec.padding)
            if spec.bias:
                pre = pre + model.params[f"layer{i}.bias"][None, :, None, None]
            out = np.maximum(pre, 0) if spec.activation == "relu" else pre
            if record_trace:
                entry["pre"] = pre
        elif spec.kind == "MaxPool1D":
            out, idx = kernels.maxpool1d_forward(x, spec.kernel, spec.stride)
            if record_trace:
                entry["argmax"] = idx
        elif spec.kind == "MaxPool2D":
            out, idx = kernels.maxpool2d_forward(x, spec.kernel, spec.stride)
            if record_trace:
                entry["argmax"] = idx
        elif spec.kind == "Dense":
            w = model.params[f"layer{i}.weight"]
            flat = x.reshape(x.shape[0], -1)
            pre = flat @ w.T
            if spec.bias:
                pre = pre + model.params[f"layer{i}.bias"][None, :]
            out = np.maximum(pre, 0) if spec.activation == "relu" else pre
            if record_trace:
                entry["pre"] = pre
        elif spec.kind == "ReLU":
            out = np.maximum(x, 0)
        elif spec.kind == "Flatten":
            out = x.reshape(x.shape[0], -1)
        elif spec.kind == "Dropout":
            if train_mode and spec.p > 0:
                mask = (rng.random(x.shape) >= spec.p).astype(x.dtype) / (1.0 - spec.p)
                out = x * mask
                if record_trace:
                    entry["mask"] = mask
            else:
                out = x
        if record_trace:
            entries.append(entry)
        x = out
    logits = x if not single else x[0]
    if not np.all(np.isfinite(logits)):
        raise NumericError("forward pass produced non-finite logits")
    trace = None
    if record_trace:
        trace = ActivationTrace(entries=entries, x=trace_x, single=single,
                                train_mode=train_mode)
    return logits, trace


def backward(model: Model, trace: ActivationTrace, logit_grad):
    """Parameter gradients for a recorded forward pass."""
    if trace is None:
        raise ConfigError("backward requires a trace from forward(record_trace=True)")
    g = np.asarray(logit_grad, dtype=model.dtype)
    if trace.single:
        g = g[None]
    if g.shape[0] != trace.x.shape[0]:
        raise ShapeError("logit_grad batch size does not match trace")
    grads = {}
    for i in reversed(range(len(model.spec.layers))):
        spec = model.spec.layers[i]
        e = trace.entries[i]
        x = e["x"]
        if spec.kind in ("Conv1D", "Conv2D", "Dense") and spec.activation == "relu":
            g = g * (e["pre"] > 0)
        if spec.kind == "Conv1D":
            w = model.params[f"layer{i}.weight"]
            grads[f"layer{i}.weight"] = kernels.conv1d_weight_grad(
                x, g, spec.stride, spec.padding, spec.kernel)
            if spec.bias:
                grads[f"layer{i}.bias"] = g.sum(axis=(0, 2))
            g = kernels.conv1d_input_grad(g, w, spec.stride, spec.padding, x.shape[2])
        elif spec.kind == "Conv2D":
            w = model.params[f"layer{i}.weight"]
            grads[f"layer{i}.weight"] = kernels.conv2d_weight_grad(
                x, g, spec.stride, spec.padding, spec.kernel, spec.kernel)
            if spec.bias:
                grads[f"layer{i}.bias"] = g.sum(axis=(0, 2, 3))
            g = kernels.conv2d_input_grad(
                g, w, spec.stride, spec.padding, x.shape[2], x.shape[3])
        elif spec.kind == "Dense":
            w = model.params[f"layer{i}.weight"]
            flat = x.reshape(x.shape[0], -1)
            grads[f"layer{i}.weight"] = g.T @ flat
            if spec.bias:
                grads[f"layer{i}.bias"] = g.sum(axis=0)
            g = (g @ w).reshape(x.shape)
        elif spec.kind == "MaxPool1D":
            g = kernels.maxpool1d_backward(g, e["argmax"], x.shape[2],
                                           spec.kernel, spec.stride)
        elif spec.kind == "MaxPool2D":
            g = kernels.maxpool2d_backward(g, e["argmax"], x.shape[2], x.shape[3])
        elif spec.kind == "ReLU":
            g = g * (x > 0)
        elif spec.kind == "Flatten":
            g = g.reshape(x.shape)
        elif spec.kind == "Dropout":
            mask = e.get("mask")
            if mask is not None:
                g = g * mask
    return grads


def softmax_cross_entropy(logits, labels):
    """Loss and logit gradient; accepts a single example or a batch.

    Batched loss is the mean over examples and the gradient is scaled
    accordingly (softmax minus one-hot, divided by the batch size).
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, k = z.shape
    if y.shape != (n,):
        raise ShapeError(f"labels shape {y.shape} does not match batch {n}")
    if np.any(y < 0) or np.any(y >= k):
        raise ConfigError(f"label out of range for {k} classes")
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    sez = ez.sum(axis=1, keepdims=True)
    logp = (z - m) - np.log(sez)
    loss = float(-logp[np.arange(n), y].mean())
    grad = ez / sez
    grad[np.arange(n), y] -= 1.0
    grad = grad.astype(logits.dtype) / n
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, (grad[0] if single else grad)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    clip: float = 5.0
    batch_size: int = 100
    iterations: int = 10000
    halving_interval: int = 2500
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.clip <= 0:
            raise ConfigError("clip must be > 0")
        if self.halving_interval < 1:
            raise ConfigError("halving_interval must be >= 1")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size >= 1 and iterations >= 0 required")


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    return cfg.learning_rate * 0.5 ** (iteration // cfg.halving_interval)


def sgd_step(params, grads, cfg: TrainConfig, state, iteration):
    """One momentum-SGD update, in place.

    v <- momentum*v - lr(it)*clip(g); p <- p + v. Gradients are clipped
    elementwise to +-cfg.clip. Momentum buffers in ``state`` are created
    zero on first use.
    """
    lr = learning_rate(cfg, iteration)
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        g = np.clip(g, -cfg.clip, cfg.clip)
        v = state.get(name)
        if v is None:
            v = np.zeros_like(p)
            state[name] = v
        v *= cfg.momentum
        v -= (lr * g).astype(p.dtype)
        p += v
    return lr


def predict(model: Model, x, batch_size=200):
    """Predicted class indices for a batch of inputs (eval mode)."""
    x = np.asarray(x)
    preds = []
    for start in range(0, x.shape[0], batch_size):
        logits, _ = forward(model, x[start : start + batch_size])
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def fit(model: Model, x_train, y_train, cfg: TrainConfig, x_val=None, y_val=None,
        rng=None, eval_every=100, callback=None):
    """Train in place; returns history rows (iteration, lr, loss, val_acc).

    ``val_acc`` is NaN on iterations where validation was not run.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x_train = np.asarray(x_train, dtype=model.dtype)
    y_train = np.asarray(y_train, dtype=np.int64)
    n = x_train.shape[0]
    if n == 0:
        raise DataError("empty training set")
    state = {}
    history = []
    order = rng.permutation(n)
    pos = 0
    for it in range(cfg.iterations):
        if pos + cfg.batch_size > n:
            order = rng.permutation(n)
            pos = 0
        take = min(cfg.batch_size, n)
        idx = order[pos : pos + take]
        pos += take
        logits, trace = forward(model, x_train[idx], record_trace=True,
                                train_mode=True, rng=rng)
        loss, g = softmax_cross_entropy(logits, y_train[idx])
        grads = backward(model, trace, g)
        lr = sgd_step(model.params, grads, cfg, state, it)
        last = it == cfg.iterations - 1
        if (it + 1) % eval_every == 0 or last:
            val_acc = float("nan")
            if x_val is not None:
                val_acc = float(np.mean(predict(model, x_val) == y_val))
            history.append((it + 1, lr, loss, val_acc))
            if callback is not None:
                callback(it + 1, lr, loss, val_acc)
    return history


def build_audionet(classes, width_scale=1.0):
    """Raw-waveform 1-D CNN: six conv3/pool2 stages then FC-1024/512/classes."""
    if classes not in (2, 10):
        raise ConfigError("audionet supports 2 or 10 classes")

    def w(c):
        return max(1, int(round(c * width_scale)))

    layers = []
    for ch in (100, 64, 128, 128, 128, 128):
        layers.append(conv1d(w(ch), kernel=3, stride=1, padding=1, activation="relu"))
        layers.append(maxpool1d(2, 2))
    layers.append(dense(w(1024), activation="relu"))
    layers.append(dense(w(512), activation="relu"))
    layers.append(dense(classes))
    return ModelSpec(tuple(layers), input_shape=(8000, 1), n_classes=classes,
                     name=f"audionet-w{width_scale:g}")


def build_alexnet_variant(classes, width_scale=1.0, dropout_p=0.5):
    """Single-channel AlexNet-style 2-D CNN for 227x227 inputs.

    No normalization layers, no grouped convolutions; hidden FC widths
    1024/1024 (scaled), dropout after each hidden FC layer.
    """
    if classes not in (2, 10):
        raise ConfigError("alexnet variant supports 2 or 10 classes")

    def w(c):
        return max(1, int(round(c * width_scale)))

    layers = [
        conv2d(w(96), kernel=11, stride=4, padding=0, activation="relu"),
        maxpool2d(3, 2),
        conv2d(w(256), kernel=5, stride=1, padding=2, activation="relu"),
        maxpool2d(3, 2),
        conv2d(w(384), kernel=3, stride=1, padding=1, activation="relu"),
        conv2d(w(384), kernel=3, stride=1, padding=1, activation="relu"),
        conv2d(w(256), kernel=3, stride=1, padding=1, activation="relu"),
        maxpool2d(3, 2),
        dense(w(1024), activation="relu"),
    ]
    if dropout_p > 0:
        layers.append(dropout(dropout_p))
    layers.append(dense(w(1024), activation="relu"))
    if dropout_p > 0:
        layers.append(dropout(dropout_p))
    layers.append(dense(classes))
    return ModelSpec(tuple(layers), input_shape=(227, 227, 1), n_classes=classes,
                     name=f"alexnet-variant-w{width_scale:g}")
