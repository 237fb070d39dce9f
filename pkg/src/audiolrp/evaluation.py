"""Explanation validation: three-strategy sample zeroing with accuracy
curves, frequency-axis scaling of spectrograms, and accuracy bookkeeping.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DataError, ShapeError
from .lrp import LrpConfig, explain

STRATEGIES = ("random", "amplitude", "relevance")


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str
    seed: int = 0
    signed: bool = True  # relevance ordering: signed R descending; False -> |R|

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def select_indices(strategy: SelectionStrategy, signal, fraction,
                   relevance=None, rng=None):
    """Indices to zero for one signal at one fraction.

    Random draws among non-zero samples (from ``rng``); amplitude takes
    the top fraction by |x|; relevance by R (signed by default). Ties
    break to the lower index; amplitude/relevance selections are nested
    across fractions.
    """
    signal = np.asarray(signal).reshape(-1)
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must be in [0, 1], got {fraction}")
    if strategy.kind == "relevance":
        if relevance is None:
            raise ConfigError("relevance strategy requires a relevance map")
        r = np.asarray(relevance).reshape(-1)
        if r.shape != signal.shape:
            raise ShapeError("relevance shape does not match signal")
    if strategy.kind == "random":
        eligible = np.flatnonzero(signal != 0.0)
        k = _round_half_up(fraction * eligible.size)
        if k == 0:
            return np.zeros(0, dtype=np.int64)
        if rng is None:
            rng = np.random.default_rng(strategy.seed)
        return np.sort(rng.choice(eligible, size=k, replace=False))
    k = _round_half_up(fraction * signal.size)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if strategy.kind == "amplitude":
        order = np.argsort(-np.abs(signal), kind="stable")
    else:
        key = -np.asarray(relevance).reshape(-1)
        if not strategy.signed:
            key = -np.abs(np.asarray(relevance).reshape(-1))
        order = np.argsort(key, kind="stable")
    return np.sort(order[:k])


def zero_out(signal, indices):
    """Copy of the signal with the selected positions set exactly to 0."""
    signal = np.asarray(signal)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= signal.size):
        raise ConfigError("zero_out index out of range")
    out = signal.reshape(-1).copy()
    out[indices] = 0.0
    return out.reshape(signal.shape)


@dataclass
class PerturbationCurve:
    task: str
    rows: list = field(default_factory=list)  # (strategy, fraction, accuracy, n)

    def accuracy(self, strategy, fraction):
        for s, f, a, _ in self.rows:
            if s == strategy and f == fraction:
                return a
        raise KeyError((strategy, fraction))

    def to_csv(self, chance=None) -> str:
        buf = io.StringIO()
        if chance is None:
            buf.write("task,strategy,fraction,accuracy,n\n")
            for s, f, a, n in self.rows:
                buf.write(f"{self.task},{s},{f:g},{a!r},{n}\n")
        else:
            buf.write("task,strategy,fraction,accuracy,n,chance\n")
            for s, f, a, n in self.rows:
                buf.write(f"{self.task},{s},{f:g},{a!r},{n},{chance!r}\n")
        return buf.getvalue()


def perturbation_sweep(model: nn.Model, signals, labels, strategies, fractions,
                       lrp_cfg: LrpConfig = LrpConfig(), task="digit",
                       batch_size=100):
    """Accuracy per (strategy, fraction) under sample zeroing.

    ``signals``: (N, 8000) waveforms in the model's input convention.
    Relevance is computed once per example on the clean signal, with
    respect to the model's clean prediction, and reused for every
    fraction. Returns ``(curve, audit)`` where audit rows record the
    selected-index count per example.
    """
    signals = np.asarray(signals)
    if signals.ndim != 2:
        raise ShapeError("signals must be (N, length)")
    n = signals.shape[0]
    if n == 0:
        raise DataError("empty evaluation fold")
    labels = np.asarray(labels, dtype=np.int64)

    x = signals[..., None]  # (N, L, 1) channels-last
    preds = nn.predict(model, x, batch_size=batch_size)
    relevances = np.empty_like(signals, dtype=np.float64)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        _, trace = nn.forward(model, x[start:stop], record_trace=True)
        for i in range(start, stop):
            sub = _slice_trace(trace, i - start)
            rmap = explain(model, sub, int(preds[i]), lrp_cfg)
            relevances[i] = rmap.values.reshape(-1)

    curve = PerturbationCurve(task=task)
    audit = []
    for strat in strategies:
        for fi, fraction in enumerate(fractions):
            perturbed = np.empty_like(signals)
            for i in range(n):
                rng = None
                if strat.kind == "random":
                    rng = np.random.default_rng([strat.seed, fi, i])
                sel = select_indices(strat, signals[i], fraction,
                                     relevance=relevances[i], rng=rng)
                perturbed[i] = zero_out(signals[i], sel)
                audit.append({"example": i, "strategy": strat.kind,
                              "fraction": fraction, "selected": int(sel.size)})
            p = nn.predict(model, perturbed[..., None], batch_size=batch_size)
            acc = float(np.mean(p == labels))
            curve.rows.append((strat.kind, float(fraction), acc, n))
    return curve, audit


def _slice_trace(trace, i):
    """Single-example view of a batched trace (for per-example LRP)."""
    entries = []
    for e in trace.entries:
        sub = {}
        for k, v in e.items():
            sub[k] = v[i : i + 1]
        entries.append(sub)
    return nn.ActivationTrace(entries=entries, x=trace.x[i : i + 1], single=True,
                              train_mode=trace.train_mode)


def scale_frequency_axis(values, factor):
    """Resample the frequency axis: output row f reads the linearly
    interpolated source row f/factor; rows mapping beyond the top fill
    with the spectrogram minimum. Time axis untouched."""
    if factor <= 0:
        raise ConfigError("scale factor must be > 0")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError("expected a 2-D spectrogram")
    nf = values.shape[0]
    src = np.arange(nf) / factor
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    hi = np.minimum(lo + 1, nf - 1)
    lo = np.minimum(lo, nf - 1)
    out = values[lo] * (1.0 - frac)[:, None] + values[hi] * frac[:, None]
    out[src > nf - 1] = values.min()
    return out


def evaluate_accuracy(model: nn.Model, inputs, labels, batch_size=100):
    """Fraction of correct predictions on one fold."""
    inputs = np.asarray(inputs)
    if inputs.shape[0] == 0:
        raise DataError("empty evaluation fold")
    labels = np.asarray(labels, dtype=np.int64)
    preds = nn.predict(model, inputs, batch_size=batch_size)
    return float(np.mean(preds == labels))


def fold_summary(accuracies):
    """Mean and sample standard deviation across folds."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise DataError("no folds to summarize")
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


def gender_flip_accuracy(model: nn.Model, spectrograms, labels, low_class,
                         factor_low=1.5, factor_high=0.66, mean=None,
                         batch_size=50):
    """Accuracy after scaling each class toward the other's frequency range.

    ``spectrograms``: (N, 227, 227) dB values before mean subtraction.
    Examples of ``low_class`` are scaled by ``factor_low``; the rest by
    ``factor_high``. ``mean`` (training mean) is subtracted after the
    manipulation, matching the network's input convention.
    """
    spectrograms = np.asarray(spectrograms, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    out = np.empty_like(spectrograms)
    for i in range(spectrograms.shape[0]):
        factor = factor_low if labels[i] == low_class else factor_high
        out[i] = scale_frequency_axis(spectrograms[i], factor)
    if mean is not None:
        out = out - np.asarray(mean)[None]
    return evaluate_accuracy(model, out[..., None], labels, batch_size=batch_size)
