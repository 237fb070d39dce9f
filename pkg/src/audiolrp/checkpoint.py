"""Binary checkpoint and tensor-blob serialization.

Layout (all little-endian):
  magic ``ALRP`` | u32 version | u32 descriptor length | descriptor
  (canonical JSON of the architecture) | 32-byte SHA-256 of the
  descriptor | u32 blob count | blobs.

Each blob: u32 name length | name utf-8 | u8 dtype tag (0=f32, 1=f64,
2=i64) | u8 ndim | u32 per extent | raw row-major values.

Standalone tensor files (spectrograms, relevance maps, the training
mean) reuse the blob encoding with magic ``ALTB``.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import ArchitectureMismatchError, CheckpointError
from .nn import Model, ModelSpec

MAGIC = b"ALRP"
TENSOR_MAGIC = b"ALTB"
VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}


def describe(spec: ModelSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))


def architecture_hash(spec: ModelSpec) -> str:
    return hashlib.sha256(describe(spec).encode()).hexdigest()


def _atomic_write(path, payload: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_blob(name: str, arr: np.ndarray) -> bytes:
    dt = np.dtype(arr.dtype)
    if dt not in _TAG_FOR:
        raise CheckpointError(f"unsupported dtype {dt} for blob {name!r}")
    nb = name.encode()
    parts = [struct.pack("<I", len(nb)), nb,
             struct.pack("<BB", _TAG_FOR[dt], arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(np.ascontiguousarray(arr).astype(dt.newbyteorder("<")).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def _decode_blob(r: _Reader):
    name = r.take(r.u32()).decode()
    tag, ndim = struct.unpack("<BB", r.take(2))
    if tag not in _DTYPE_TAGS:
        raise CheckpointError(f"unknown dtype tag {tag}")
    shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
    dt = _DTYPE_TAGS[tag]
    raw = r.take(int(np.prod(shape, dtype=np.int64)) * dt.itemsize)
    arr = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
    return name, arr


def save_checkpoint(model: Model, path, extras=None):
    """Write model parameters (plus optional named extra tensors)."""
    desc = describe(model.spec).encode()
    blobs = dict(model.params)
    if extras:
        for k, v in extras.items():
            blobs[f"extra.{k}"] = np.asarray(v)
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(desc)), desc,
             hashlib.sha256(desc).digest(), struct.pack("<I", len(blobs))]
    for name in sorted(blobs):
        parts.append(_encode_blob(name, blobs[name]))
    _atomic_write(path, b"".join(parts))


def load_checkpoint(path, expect_spec: ModelSpec = None):
    """Read a checkpoint; returns ``(model, extras)``.

    With ``expect_spec``, the stored architecture must match exactly.
    """
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    desc = r.take(r.u32())
    digest = r.take(32)
    if hashlib.sha256(desc).digest() != digest:
        raise CheckpointError(f"{path}: architecture hash mismatch (corrupt header)")
    try:
        spec = ModelSpec.from_dict(json.loads(desc.decode()))
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad architecture descriptor: {exc}") from exc
    if expect_spec is not None and describe(expect_spec) != desc.decode():
        raise ArchitectureMismatchError(
            f"{path}: stored architecture {spec.name!r} does not match "
            f"expected {expect_spec.name!r}"
        )
    n_blobs = r.u32()
    params = {}
    extras = {}
    for _ in range(n_blobs):
        name, arr = _decode_blob(r)
        if name.startswith("extra."):
            extras[name[len("extra."):]] = arr
        else:
            params[name] = arr
    dtypes = {p.dtype for p in params.values()}
    dtype = np.float64 if np.dtype(np.float64) in dtypes else np.float32
    try:
        model = Model(spec, params, dtype=dtype)
    except Exception as exc:
        raise CheckpointError(f"{path}: parameters inconsistent: {exc}") from exc
    return model, extras


def save_tensor(arr, path):
    """Write a single tensor in the blob convention (magic ``ALTB``)."""
    payload = TENSOR_MAGIC + struct.pack("<I", VERSION) + _encode_blob("tensor", np.asarray(arr))
    _atomic_write(path, payload)


def load_tensor(path):
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != TENSOR_MAGIC:
        raise CheckpointError(f"{path}: not a tensor blob file")
    if r.u32() != VERSION:
        raise CheckpointError(f"{path}: unsupported version")
    _, arr = _decode_blob(r)
    return arr
