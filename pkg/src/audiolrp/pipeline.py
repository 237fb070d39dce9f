"""Audio preprocessing: WAV decoding, 48k->8k resampling, randomized
zero-padding to 8000 samples, STFT magnitude spectrograms (228x230),
dB conversion, cropping to 227x227, and training-mean normalization.

STFT convention: segment 455, overlap 420 (hop 35), periodic Hann
window, centered frames with zero boundary extension. That yields
ceil(8000/35)+1 = 230 frames and floor(455/2)+1 = 228 one-sided bins.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, ShapeError

RATE_IN = 48000
RATE = 8000
TARGET_LEN = 8000
SEGMENT = 455
OVERLAP = 420
HOP = SEGMENT - OVERLAP  # 35
N_BINS = SEGMENT // 2 + 1  # 228
N_FRAMES = TARGET_LEN // HOP + (1 if TARGET_LEN % HOP else 0) + 1  # 230
DB_FLOOR = 1e-10
CROP = 227


@dataclass
class Waveform:
    samples: np.ndarray  # float in [-1, 1]
    rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError("waveform must be a non-empty 1-D signal")


@dataclass
class PaddedSignal:
    samples: np.ndarray  # exactly 8000 samples
    offset: int  # start index of the original signal

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.shape != (TARGET_LEN,):
            raise ShapeError(f"padded signal must have {TARGET_LEN} samples")


@dataclass
class Spectrogram:
    values: np.ndarray  # (freq bins, time frames)
    hz_per_bin: float = RATE / SEGMENT
    sec_per_frame: float = HOP / RATE
    units: str = "linear"  # or "db"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("spectrogram must be 2-D (freq x time)")


def read_wav(path) -> Waveform:
    """Decode a RIFF/WAVE file; PCM 16-bit mono only.

    Integer samples are scaled by 1/32768 into [-1, 1).
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DataError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    raw = None
    declared = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        size = int.from_bytes(data[pos + 4 : pos + 8], "little")
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise DataError(f"{path}: malformed fmt chunk")
            audio_format = int.from_bytes(body[0:2], "little")
            channels = int.from_bytes(body[2:4], "little")
            rate = int.from_bytes(body[4:8], "little")
            bits = int.from_bytes(body[14:16], "little")
            fmt = (audio_format, channels, rate, bits)
        elif cid == b"data":
            declared = size
            raw = body
        pos += 8 + size + (size & 1)
    if fmt is None or declared is None:
        raise DataError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, bits = fmt
    if audio_format != 1 or bits != 16:
        raise DataError(f"{path}: unsupported encoding (PCM 16-bit required)")
    if channels != 1:
        raise DataError(f"{path}: unsupported channel count {channels} (mono required)")
    if len(raw) < declared:
        raise DataError(f"{path}: malformed file, data chunk shorter than declared")
    ints = np.frombuffer(raw[:declared], dtype="<i2")
    if ints.size == 0:
        raise DataError(f"{path}: empty data chunk")
    return Waveform(ints.astype(np.float64) / 32768.0, rate)


def write_wav(path, samples, rate):
    """PCM16 mono writer (test fixtures and the synth exporter)."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    ints = np.round(x * 32768.0).astype("<i2")
    body = ints.tobytes()
    hdr = b"".join([
        b"RIFF", (36 + len(body)).to_bytes(4, "little"), b"WAVE",
        b"fmt ", (16).to_bytes(4, "little"), (1).to_bytes(2, "little"),
        (1).to_bytes(2, "little"), rate.to_bytes(4, "little"),
        (rate * 2).to_bytes(4, "little"), (2).to_bytes(2, "little"),
        (16).to_bytes(2, "little"),
        b"data", len(body).to_bytes(4, "little"),
    ])
    with open(path, "wb") as f:
        f.write(hdr + body)


def _lowpass_taps(n_taps=127, cutoff_hz=0.9 * RATE / 2, rate=RATE_IN):
    # windowed-sinc (Hamming) low-pass, unit DC gain
    m = (n_taps - 1) / 2
    n = np.arange(n_taps)
    fc = cutoff_hz / rate
    h = 2 * fc * np.sinc(2 * fc * (n - m))
    h *= np.hamming(n_taps)
    return h / h.sum()


_TAPS = _lowpass_taps()


def resample_to_8k(w: Waveform) -> Waveform:
    """Anti-aliased 6:1 decimation from 48 kHz to 8 kHz."""
    if w.rate != RATE_IN:
        raise DataError(f"resample expects {RATE_IN} Hz input, got {w.rate}")
    filtered = np.convolve(w.samples, _TAPS, mode="same")
    return Waveform(filtered[::6], RATE)


def pad_random(w: Waveform, rng: np.random.Generator) -> PaddedSignal:
    """Embed the signal at a uniformly random offset in 8000 zeros."""
    if w.rate != RATE:
        raise DataError(f"pad_random expects {RATE} Hz input, got {w.rate}")
    n = w.samples.size
    if n > TARGET_LEN:
        raise DataError(f"signal of {n} samples exceeds the {TARGET_LEN}-sample frame")
    offset = int(rng.integers(0, TARGET_LEN - n + 1))
    out = np.zeros(TARGET_LEN)
    out[offset : offset + n] = w.samples
    return PaddedSignal(out, offset)


def _hann_periodic(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


_WINDOW = _hann_periodic(SEGMENT)


def frame_starts():
    """Start index (into the unpadded signal) of each centered frame."""
    half = SEGMENT // 2
    return np.arange(N_FRAMES) * HOP - half


def stft_spectrogram(signal) -> Spectrogram:
    """Linear-magnitude STFT of an 8000-sample signal, shape 228x230."""
    if isinstance(signal, PaddedSignal):
        x = signal.samples
    else:
        x = np.asarray(signal, dtype=np.float64)
    if x.shape != (TARGET_LEN,):
        raise ShapeError(f"stft expects {TARGET_LEN} samples, got {x.shape}")
    starts = frame_starts()
    half = SEGMENT // 2
    left = half
    right = int(starts[-1]) + SEGMENT - TARGET_LEN
    xp = np.concatenate([np.zeros(left), x, np.zeros(max(right, 0))])
    frames = xp[(starts[:, None] + left) + np.arange(SEGMENT)[None, :]]
    spec = np.abs(np.fft.rfft(frames * _WINDOW, axis=1))  # (frames, bins)
    return Spectrogram(spec.T.copy(), units="linear")


def to_decibels(s: Spectrogram) -> Spectrogram:
    """Amplitude dB: 20*log10(max(m, 1e-10)), reference amplitude 1.0."""
    if s.units != "linear":
        raise ConfigError("to_decibels expects linear magnitudes")
    if np.any(s.values < 0):
        raise ConfigError("linear magnitudes must be >= 0")
    vals = 20.0 * np.log10(np.maximum(s.values, DB_FLOOR))
    return replace(s, values=vals, units="db")


def crop_227(s: Spectrogram) -> Spectrogram:
    """Drop the highest frequency bin and the last three time frames."""
    if s.values.shape != (N_BINS, N_FRAMES):
        raise ShapeError(
            f"crop expects {N_BINS}x{N_FRAMES}, got {s.values.shape}"
        )
    return replace(s, values=s.values[:CROP, :CROP].copy())


def fit_mean(spectrograms, roles=None) -> np.ndarray:
    """Element-wise mean over a training set of cropped spectrograms.

    ``roles`` (parallel fold-role tags) guards against leakage: any
    non-train entry is an error.
    """
    mats = []
    for i, s in enumerate(spectrograms):
        if roles is not None and roles[i] != "train":
            raise DataError(
                f"mean fitting saw a {roles[i]!r} example; "
                "training-mean must be fitted on the training fold only"
            )
        v = s.values if isinstance(s, Spectrogram) else np.asarray(s, dtype=np.float64)
        if v.shape != (CROP, CROP):
            raise ShapeError(f"expected {CROP}x{CROP} spectrogram, got {v.shape}")
        mats.append(v)
    if not mats:
        raise DataError("cannot fit a mean on an empty training set")
    acc = np.zeros((CROP, CROP))
    for m in mats:  # fixed order: deterministic reduction
        acc += m
    return acc / len(mats)


def apply_mean(s, mean):
    mean = np.asarray(mean)
    v = s.values if isinstance(s, Spectrogram) else np.asarray(s, dtype=np.float64)
    if v.shape != mean.shape:
        raise ShapeError(f"spectrogram {v.shape} vs mean {mean.shape}")
    out = v - mean
    if isinstance(s, Spectrogram):
        return replace(s, values=out)
    return out


def spectrogram_input(signal) -> np.ndarray:
    """Padded signal -> cropped dB spectrogram values (227x227)."""
    return crop_227(to_decibels(stft_spectrogram(signal))).values
