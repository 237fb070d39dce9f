"""Zero-centered diverging heatmap rendering to binary PPM.

Positive relevance maps toward red, negative toward blue, zero to the
exact center color (white). Images are normalized per map by max |R|,
so scaling a map by a positive constant leaves the bytes unchanged.
"""

import os
import tempfile

import numpy as np

from .errors import NumericError, ShapeError


def _atomic_write(path, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-ppm-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ppm(pixels, path):
    """pixels: (H, W, 3) uint8 -> binary P6 file, written atomically."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError("expected (H, W, 3) pixel array")
    h, w, _ = pixels.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    _atomic_write(path, header + pixels.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ShapeError(f"{path}: not a P6 file")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data[pos : pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def diverging_rgb(normalized):
    """Map values in [-1, 1] to blue-white-red, exact white at 0."""
    v = np.asarray(normalized, dtype=np.float64)
    rgb = np.empty(v.shape + (3,), dtype=np.uint8)
    pos = np.clip(v, 0.0, 1.0)
    neg = np.clip(-v, 0.0, 1.0)
    fade_pos = np.round(255.0 * (1.0 - pos)).astype(np.uint8)
    fade_neg = np.round(255.0 * (1.0 - neg)).astype(np.uint8)
    rgb[..., 0] = np.where(v >= 0, 255, fade_neg)
    rgb[..., 1] = np.where(v >= 0, fade_pos, fade_neg)
    rgb[..., 2] = np.where(v >= 0, fade_pos, 255)
    return rgb


def _normalize(relevance):
    r = np.asarray(relevance, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise NumericError("relevance map contains non-finite values")
    m = np.abs(r).max()
    return r / m if m > 0 else np.zeros_like(r)


def render_heatmap(relevance, out_path, base=None, flip_rows=True):
    """Render a 2-D relevance map; returns the written path.

    ``base`` (same shape) draws a grayscale underlay of the input
    spectrogram beneath the relevance colors. Rows are flipped so low
    frequencies sit at the bottom of the image.
    """
    r = np.asarray(relevance, dtype=np.float64)
    if r.ndim == 3 and r.shape[-1] == 1:
        r = r[..., 0]
    if r.ndim != 2:
        raise ShapeError("render_heatmap expects a 2-D relevance map")
    rgb = diverging_rgb(_normalize(r)).astype(np.float64)
    if base is not None:
        b = np.asarray(base, dtype=np.float64)
        if b.ndim == 3 and b.shape[-1] == 1:
            b = b[..., 0]
        if b.shape != r.shape:
            raise ShapeError("base shape does not match relevance shape")
        span = b.max() - b.min()
        gray = (b - b.min()) / span if span > 0 else np.zeros_like(b)
        rgb = 0.55 * rgb + 0.45 * (gray[..., None] * 255.0)
    pixels = np.round(rgb).astype(np.uint8)
    if flip_rows:
        pixels = pixels[::-1]
    write_ppm(pixels, out_path)
    return out_path


def render_waveform_heatmap(signal, relevance, out_path, height=161):
    """Per-sample color-coded waveform strip.

    Each column is tinted by its sample's relevance; the waveform trace
    itself is drawn in dark gray on top.
    """
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    r = np.asarray(relevance, dtype=np.float64).reshape(-1)
    if x.shape != r.shape:
        raise ShapeError("signal and relevance lengths differ")
    colors = diverging_rgb(_normalize(r))  # (W, 3)
    w = x.size
    pixels = np.empty((height, w, 3), dtype=np.uint8)
    pixels[:] = colors[None, :, :]
    peak = np.abs(x).max()
    amp = x / peak if peak > 0 else np.zeros_like(x)
    rows = np.round((1.0 - amp) * (height - 1) / 2.0).astype(np.int64)
    pixels[rows, np.arange(w)] = (40, 40, 40)
    write_ppm(pixels, out_path)
    return out_path
