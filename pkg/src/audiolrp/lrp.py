"""Layer-wise relevance propagation over a recorded forward trace.

Relevance is redistributed proportionally to forward contributions
z_ij = x_i * w_ij and pooled across all receiving neurons. For dense and
convolutional layers this collapses to

    R_in = x * backward(w, R_out / stabilize(denominator))

where the denominator is the pre-activation recomputed in float64 from
the traced inputs (biases included in "absorb" mode). Max pooling routes
relevance winner-take-all along the recorded argmax map; ReLU, flatten,
and (inactive) dropout pass relevance through unchanged.

All rule arithmetic runs in float64 regardless of the model dtype.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .nn import ActivationTrace, Model

BIAS_MODES = ("absorb", "distribute")
INIT_MODES = ("logit", "unit")


@dataclass(frozen=True)
class LrpConfig:
    epsilon: float = 1e-6
    bias_mode: str = "absorb"
    init_mode: str = "logit"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"bias_mode must be one of {BIAS_MODES}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}")


@dataclass
class RelevanceMap:
    values: np.ndarray  # shaped like the model input (channels-last)
    target: int
    epsilon: float
    zero_denominators: int = 0

    @property
    def total(self) -> float:
        return float(self.values.sum())


def init_output_relevance(logits, target, mode="logit"):
    """One-hot output relevance: target logit value (or 1.0 in unit mode)."""
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[-1]
    if not 0 <= target < k:
        raise ConfigError(f"target {target} out of range for {k} classes")
    out = np.zeros_like(logits)
    out[..., target] = logits[..., target] if mode == "logit" else 1.0
    return out


class _ZeroCounter:
    def __init__(self):
        self.count = 0


def _factor(relevance, denom, epsilon, counter):
    """R / stabilized denominator, with exact-zero denominators routed as 0."""
    if epsilon > 0:
        denom = denom + epsilon * np.where(denom >= 0, 1.0, -1.0)
    zero = denom == 0.0
    if np.any(zero):
        counter.count += int(zero.sum())
        denom = np.where(zero, 1.0, denom)
        return np.where(zero, 0.0, relevance / denom)
    return relevance / denom


def lrp_dense(x, w, b, relevance, cfg=LrpConfig(), counter=None):
    """Dense-layer rule. ``w`` has shape (inputs, outputs) so that
    z_ij = x[i] * w[i, j]; ``b`` may be None."""
    counter = counter or _ZeroCounter()
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = np.asarray(relevance, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    rb = r[None] if single else r
    if w.shape[0] != xb.shape[1] or w.shape[1] != rb.shape[1]:
        raise ShapeError(
            f"weight shape {w.shape} inconsistent with x {x.shape} / R {r.shape}"
        )
    denom = xb @ w
    if b is not None:
        denom = denom + np.asarray(b, dtype=np.float64)[None, :]
    f = _factor(rb, denom, cfg.epsilon, counter)
    rin = xb * (f @ w.T)
    if b is not None and cfg.bias_mode == "distribute":
        rin = rin + (f * np.asarray(b, dtype=np.float64)).sum(axis=1, keepdims=True) / xb.shape[1]
    return rin[0] if single else rin


def _lrp_conv(x, w, b, relevance, stride, padding, cfg, counter, ndim):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = np.asarray(relevance, dtype=np.float64)
    if ndim == 1:
        denom = kernels.conv1d_forward(x, w, stride, padding)
        if b is not None:
            denom = denom + np.asarray(b, dtype=np.float64)[None, :, None]
        f = _factor(r, denom, cfg.epsilon, counter)
        rin = x * kernels.conv1d_input_grad(f, w, stride, padding, x.shape[2])
        if b is not None and cfg.bias_mode == "distribute":
            share = f * np.asarray(b, dtype=np.float64)[None, :, None]
            ones = np.ones_like(w)
            # per-output in-bounds fan-in (windows truncated by padding
            # reach fewer inputs)
            counts = kernels.conv1d_forward(np.ones_like(x[:1]), ones[:1],
                                            stride, padding)
            rin = rin + kernels.conv1d_input_grad(share / counts, ones, stride,
                                                  padding, x.shape[2])
    else:
        denom = kernels.conv2d_forward(x, w, stride, padding)
        if b is not None:
            denom = denom + np.asarray(b, dtype=np.float64)[None, :, None, None]
        f = _factor(r, denom, cfg.epsilon, counter)
        rin = x * kernels.conv2d_input_grad(f, w, stride, padding,
                                            x.shape[2], x.shape[3])
        if b is not None and cfg.bias_mode == "distribute":
            share = f * np.asarray(b, dtype=np.float64)[None, :, None, None]
            ones = np.ones_like(w)
            counts = kernels.conv2d_forward(np.ones_like(x[:1]), ones[:1],
                                            stride, padding)
            rin = rin + kernels.conv2d_input_grad(share / counts, ones, stride,
                                                  padding, x.shape[2], x.shape[3])
    return rin


def lrp_conv1d(x, w, b, relevance, stride=1, padding=0, cfg=LrpConfig(), counter=None):
    """Conv rule: each output position is a dense neuron over its window."""
    return _lrp_conv(x, w, b, relevance, stride, padding, cfg,
                     counter or _ZeroCounter(), ndim=1)


def lrp_conv2d(x, w, b, relevance, stride=1, padding=0, cfg=LrpConfig(), counter=None):
    return _lrp_conv(x, w, b, relevance, stride, padding, cfg,
                     counter or _ZeroCounter(), ndim=2)


def lrp_maxpool1d(argmax, relevance, length, k=None, stride=None):
    """Winner-take-all routing along the recorded argmax map."""
    r = np.asarray(relevance, dtype=np.float64)
    return kernels.maxpool1d_backward(r, argmax, length, k, stride)


def lrp_maxpool2d(argmax, relevance, h, w):
    r = np.asarray(relevance, dtype=np.float64)
    return kernels.maxpool2d_backward(r, argmax, h, w)


def explain(model: Model, trace: ActivationTrace, target: int,
            cfg: LrpConfig = LrpConfig()) -> RelevanceMap:
    """Propagate relevance from the target logit back to the input."""
    if trace is None:
        raise ConfigError("explain requires a trace from forward(record_trace=True)")
    if trace.train_mode:
        raise ConfigError("explain requires an eval-mode trace (dropout inactive)")
    if len(trace.entries) != len(model.spec.layers):
        raise ConfigError("trace does not match the model's layer list")
    counter = _ZeroCounter()
    # output relevance from the final pre-activation logits
    final_pre = trace.entries[-1].get("pre")
    if final_pre is None:
        final_pre = trace.entries[-1]["x"]
    r = init_output_relevance(np.asarray(final_pre, dtype=np.float64), target,
                              cfg.init_mode)
    for i in reversed(range(len(model.spec.layers))):
        spec = model.spec.layers[i]
        e = trace.entries[i]
        x = e["x"]
        if spec.kind == "Dense":
            w = model.params[f"layer{i}.weight"]
            b = model.params.get(f"layer{i}.bias") if spec.bias else None
            flat = x.reshape(x.shape[0], -1)
            r = lrp_dense(flat, w.T, b, r, cfg, counter)
            r = r.reshape(x.shape)
        elif spec.kind == "Conv1D":
            w = model.params[f"layer{i}.weight"]
            b = model.params.get(f"layer{i}.bias") if spec.bias else None
            r = _lrp_conv(x, w, b, r, spec.stride, spec.padding, cfg, counter, 1)
        elif spec.kind == "Conv2D":
            w = model.params[f"layer{i}.weight"]
            b = model.params.get(f"layer{i}.bias") if spec.bias else None
            r = _lrp_conv(x, w, b, r, spec.stride, spec.padding, cfg, counter, 2)
        elif spec.kind == "MaxPool1D":
            r = lrp_maxpool1d(e["argmax"], r, x.shape[2], spec.kernel, spec.stride)
        elif spec.kind == "MaxPool2D":
            r = lrp_maxpool2d(e["argmax"], r, x.shape[2], x.shape[3])
        elif spec.kind in ("ReLU", "Dropout"):
            pass  # identity pass-through
        elif spec.kind == "Flatten":
            r = r.reshape(x.shape)
    # back to channels-last, drop the batch axis for single inputs
    if len(model.spec.input_shape) >= 2:
        r = np.moveaxis(r, 1, -1)
    if trace.single:
        r = r[0]
    return RelevanceMap(values=r, target=int(target), epsilon=cfg.epsilon,
                        zero_denominators=counter.count)
