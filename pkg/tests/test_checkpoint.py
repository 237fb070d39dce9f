import numpy as np
import pytest

from audiolrp.checkpoint import (
    architecture_hash,
    load_checkpoint,
    load_tensor,
    save_checkpoint,
    save_tensor,
)
from audiolrp.errors import ArchitectureMismatchError, CheckpointError
from audiolrp.nn import Model, ModelSpec, conv1d, dense, maxpool1d


def tiny_spec(classes=2):
    return ModelSpec(layers=[conv1d(3, 3, 1, 1), maxpool1d(), dense(classes)],
                     input_shape=(8, 1), n_classes=classes, name="tiny")


def test_roundtrip_bitexact(tmp_path):
    model = Model.initialize(tiny_spec(), seed=4, dtype=np.float32)
    extras = {"train_mean": np.random.default_rng(0).normal(size=(5, 5)).astype(np.float32)}
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, extras=extras)
    loaded, got_extras = load_checkpoint(path, expect_spec=model.spec)
    assert loaded.spec == model.spec
    assert loaded.dtype == model.dtype
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])
        assert loaded.params[k].dtype == model.params[k].dtype
    assert np.array_equal(got_extras["train_mean"], extras["train_mean"])


def test_roundtrip_float64(tmp_path):
    model = Model.initialize(tiny_spec(), seed=1, dtype=np.float64)
    path = tmp_path / "m64.ckpt"
    save_checkpoint(model, path)
    loaded, extras = load_checkpoint(path)
    assert loaded.dtype == np.float64
    assert extras == {}
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])


def test_architecture_mismatch(tmp_path):
    model = Model.initialize(tiny_spec(2), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    with pytest.raises(ArchitectureMismatchError):
        load_checkpoint(path, expect_spec=tiny_spec(10))


def test_architecture_hash_stable_and_distinct():
    assert architecture_hash(tiny_spec(2)) == architecture_hash(tiny_spec(2))
    assert architecture_hash(tiny_spec(2)) != architecture_hash(tiny_spec(10))


def test_truncated_file_rejected(tmp_path):
    model = Model.initialize(tiny_spec(), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    data = path.read_bytes()
    short = tmp_path / "short.ckpt"
    short.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(short)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


@pytest.mark.parametrize("dtype", [np.float32, np.float64, np.int64])
def test_tensor_roundtrip(tmp_path, dtype):
    arr = (np.random.default_rng(3).normal(size=(4, 7)) * 10).astype(dtype)
    path = tmp_path / "t.bin"
    save_tensor(arr, path)
    back = load_tensor(path)
    assert back.dtype == arr.dtype
    assert np.array_equal(back, arr)
