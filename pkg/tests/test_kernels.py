"""Kernel correctness: naive-loop oracles and numba/numpy agreement."""

import numpy as np
import pytest

from audiolrp import backend, kernels
from audiolrp import _kernels_numpy as knp


def naive_conv1d(x, w, stride, padding):
    n, c, length = x.shape
    o, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    lo = (length + 2 * padding - k) // stride + 1
    y = np.zeros((n, o, lo))
    for i in range(n):
        for j in range(o):
            for t in range(lo):
                y[i, j, t] = np.sum(xp[i, :, t * stride : t * stride + k] * w[j])
    return y


def naive_conv2d(x, w, stride, padding):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    y = np.zeros((n, o, ho, wo))
    for i in range(n):
        for j in range(o):
            for th in range(ho):
                for tw in range(wo):
                    patch = xp[i, :, th * stride : th * stride + kh,
                               tw * stride : tw * stride + kw]
                    y[i, j, th, tw] = np.sum(patch * w[j])
    return y


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 2), (4, 0)])
def test_conv1d_forward_matches_naive(each_backend, rng, stride, padding):
    x = rng.normal(size=(2, 3, 21))
    w = rng.normal(size=(4, 3, 3))
    got = kernels.conv1d_forward(x, w, stride, padding)
    assert np.allclose(got, naive_conv1d(x, w, stride, padding), atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 2), (4, 0)])
def test_conv2d_forward_matches_naive(each_backend, rng, stride, padding):
    x = rng.normal(size=(2, 2, 13, 13))
    w = rng.normal(size=(3, 2, 3, 3))
    got = kernels.conv2d_forward(x, w, stride, padding)
    assert np.allclose(got, naive_conv2d(x, w, stride, padding), atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 1), (2, 0), (2, 1)])
def test_conv1d_grads_match_fd(each_backend, rng, stride, padding):
    # input/weight grads of a sum-of-outputs objective, vs finite differences
    x = rng.normal(size=(1, 2, 12))
    w = rng.normal(size=(2, 2, 3))
    gy = np.ones_like(kernels.conv1d_forward(x, w, stride, padding))
    gx = kernels.conv1d_input_grad(gy, w, stride, padding, x.shape[2])
    gw = kernels.conv1d_weight_grad(x, gy, stride, padding, w.shape[2])
    h = 1e-6
    for arr, grad in ((x, gx), (w, gw)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            arr[i] += h
            up = kernels.conv1d_forward(x, w, stride, padding).sum()
            arr[i] -= 2 * h
            dn = kernels.conv1d_forward(x, w, stride, padding).sum()
            arr[i] += h
            assert abs((up - dn) / (2 * h) - grad[i]) < 1e-6


def test_conv2d_grads_match_fd(each_backend, rng):
    x = rng.normal(size=(1, 1, 6, 6))
    w = rng.normal(size=(2, 1, 3, 3))
    gy = np.ones_like(kernels.conv2d_forward(x, w, 2, 1))
    gx = kernels.conv2d_input_grad(gy, w, 2, 1, 6, 6)
    gw = kernels.conv2d_weight_grad(x, gy, 2, 1, 3, 3)
    h = 1e-6
    for arr, grad in ((x, gx), (w, gw)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            arr[i] += h
            up = kernels.conv2d_forward(x, w, 2, 1).sum()
            arr[i] -= 2 * h
            dn = kernels.conv2d_forward(x, w, 2, 1).sum()
            arr[i] += h
            assert abs((up - dn) / (2 * h) - grad[i]) < 1e-6


@pytest.mark.parametrize("k,stride", [(2, 2), (3, 2), (3, 3)])
def test_maxpool1d_forward(each_backend, rng, k, stride):
    x = rng.normal(size=(2, 3, 17))
    y, idx = kernels.maxpool1d_forward(x, k, stride)
    lo = (17 - k) // stride + 1
    assert y.shape == (2, 3, lo)
    for i in range(2):
        for c in range(3):
            for t in range(lo):
                window = x[i, c, t * stride : t * stride + k]
                assert y[i, c, t] == window.max()
                assert x[i, c, idx[i, c, t]] == window.max()


def test_maxpool1d_tie_lowest_index(each_backend):
    x = np.array([[[4.0, 4.0, 1.0, 7.0]]])
    _, idx = kernels.maxpool1d_forward(x, 2, 2)
    assert idx[0, 0, 0] == 0


def test_maxpool1d_backward_gathers(each_backend, rng):
    x = rng.normal(size=(2, 2, 12))
    y, idx = kernels.maxpool1d_forward(x, 2, 2)
    gy = rng.normal(size=y.shape)
    gx = kernels.maxpool1d_backward(gy, idx, 12, 2, 2)
    # scattered grads land exactly on the argmax positions
    assert np.isclose(gx.sum(), gy.sum())
    recovered = np.take_along_axis(gx.reshape(2, 2, 6, 2),
                                   (idx % 2).reshape(2, 2, 6, 1), axis=-1)
    assert np.allclose(recovered[..., 0], gy)


def test_maxpool2d_roundtrip(each_backend, rng):
    x = rng.normal(size=(2, 2, 7, 7))
    y, idx = kernels.maxpool2d_forward(x, 3, 2)
    assert y.shape == (2, 2, 3, 3)
    flat = x.reshape(2, 2, 49)
    gathered = np.take_along_axis(flat, idx.reshape(2, 2, 9), axis=-1)
    assert np.allclose(gathered.reshape(y.shape), y)
    gy = rng.normal(size=y.shape)
    gx = kernels.maxpool2d_backward(gy, idx, 7, 7)
    assert np.isclose(gx.sum(), gy.sum())


@pytest.mark.skipif(not backend.numba_available(), reason="numba not installed")
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_agree(rng, dtype):
    from audiolrp import _kernels_numba as knb

    x = rng.normal(size=(3, 4, 40)).astype(dtype)
    w = rng.normal(size=(5, 4, 3)).astype(dtype)
    tol = 1e-5 if dtype == np.float32 else 1e-10
    assert np.allclose(knb.conv1d_forward(x, w, 1, 1),
                       knp.conv1d_forward(x, w, 1, 1), atol=tol)
    gy = knp.conv1d_forward(x, w, 2, 1)
    assert np.allclose(knb.conv1d_input_grad(gy, w, 2, 1, 40),
                       knp.conv1d_input_grad(gy, w, 2, 1, 40), atol=tol)
    assert np.allclose(knb.conv1d_weight_grad(x, gy, 2, 1, 3),
                       knp.conv1d_weight_grad(x, gy, 2, 1, 3), atol=tol)

    x2 = rng.normal(size=(2, 3, 12, 12)).astype(dtype)
    w2 = rng.normal(size=(4, 3, 3, 3)).astype(dtype)
    assert np.allclose(knb.conv2d_forward(x2, w2, 2, 1),
                       knp.conv2d_forward(x2, w2, 2, 1), atol=tol)
    gy2 = knp.conv2d_forward(x2, w2, 2, 1)
    assert np.allclose(knb.conv2d_input_grad(gy2, w2, 2, 1, 12, 12),
                       knp.conv2d_input_grad(gy2, w2, 2, 1, 12, 12), atol=tol)
    assert np.allclose(knb.conv2d_weight_grad(x2, gy2, 2, 1, 3, 3),
                       knp.conv2d_weight_grad(x2, gy2, 2, 1, 3, 3), atol=tol)

    ya, ia = knb.maxpool1d_forward(x, 2, 2)
    yb, ib = knp.maxpool1d_forward(x, 2, 2)
    assert np.array_equal(ya, yb) and np.array_equal(ia, ib)
    y2a, i2a = knb.maxpool2d_forward(x2, 3, 2)
    y2b, i2b = knp.maxpool2d_forward(x2, 3, 2)
    assert np.array_equal(y2a, y2b) and np.array_equal(i2a, i2b)
