"""Pure-numpy kernel implementations.

Convolutions are computed as one BLAS matmul per kernel offset, which
avoids materializing large im2col buffers. All functions take and return
batched channels-first arrays.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _pad1d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p)))


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv1d_forward(x, w, stride, padding):
    # x: (N, C, L), w: (O, C, K) -> (N, O, Lo)
    n, c, length = x.shape
    o, _, k = w.shape
    lo = (length + 2 * padding - k) // stride + 1
    xp = _pad1d(x, padding)
    y = np.zeros((n, o, lo), dtype=x.dtype)
    for j in range(k):
        seg = xp[:, :, j : j + (lo - 1) * stride + 1 : stride]
        y += np.tensordot(seg, w[:, :, j], axes=([1], [1])).transpose(0, 2, 1)
    return y


def conv1d_input_grad(gy, w, stride, padding, length):
    # gy: (N, O, Lo) -> (N, C, L)
    n, o, lo = gy.shape
    _, c, k = w.shape
    gxp = np.zeros((n, c, length + 2 * padding), dtype=gy.dtype)
    for j in range(k):
        contrib = np.tensordot(gy, w[:, :, j], axes=([1], [0]))  # (N, Lo, C)
        gxp[:, :, j : j + (lo - 1) * stride + 1 : stride] += contrib.transpose(0, 2, 1)
    if padding == 0:
        return gxp
    return gxp[:, :, padding : padding + length]


def conv1d_weight_grad(x, gy, stride, padding, k):
    n, c, length = x.shape
    _, o, lo = gy.shape
    xp = _pad1d(x, padding)
    gw = np.zeros((o, c, k), dtype=x.dtype)
    for j in range(k):
        seg = xp[:, :, j : j + (lo - 1) * stride + 1 : stride]
        gw[:, :, j] = np.tensordot(gy, seg, axes=([0, 2], [0, 2]))
    return gw


def conv2d_forward(x, w, stride, padding):
    # x: (N, C, H, W), w: (O, C, KH, KW) -> (N, O, Ho, Wo)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = _pad2d(x, padding)
    y = np.zeros((n, o, ho, wo), dtype=x.dtype)
    for jh in range(kh):
        for jw in range(kw):
            seg = xp[
                :,
                :,
                jh : jh + (ho - 1) * stride + 1 : stride,
                jw : jw + (wo - 1) * stride + 1 : stride,
            ]
            y += np.tensordot(seg, w[:, :, jh, jw], axes=([1], [1])).transpose(
                0, 3, 1, 2
            )
    return y


def conv2d_input_grad(gy, w, stride, padding, h, wd):
    n, o, ho, wo = gy.shape
    _, c, kh, kw = w.shape
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=gy.dtype)
    for jh in range(kh):
        for jw in range(kw):
            contrib = np.tensordot(gy, w[:, :, jh, jw], axes=([1], [0]))
            gxp[
                :,
                :,
                jh : jh + (ho - 1) * stride + 1 : stride,
                jw : jw + (wo - 1) * stride + 1 : stride,
            ] += contrib.transpose(0, 3, 1, 2)
    if padding == 0:
        return gxp
    return gxp[:, :, padding : padding + h, padding : padding + wd]


def conv2d_weight_grad(x, gy, stride, padding, kh, kw):
    n, c, h, wd = x.shape
    _, o, ho, wo = gy.shape
    xp = _pad2d(x, padding)
    gw = np.zeros((o, c, kh, kw), dtype=x.dtype)
    for jh in range(kh):
        for jw in range(kw):
            seg = xp[
                :,
                :,
                jh : jh + (ho - 1) * stride + 1 : stride,
                jw : jw + (wo - 1) * stride + 1 : stride,
            ]
            gw[:, :, jh, jw] = np.tensordot(gy, seg, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def maxpool1d_forward(x, k, stride):
    # Returns (values, absolute argmax indices); ties go to the lowest index.
    n, c, length = x.shape
    lo = (length - k) // stride + 1
    if k == stride:  # non-overlapping: contiguous window view
        win = np.ascontiguousarray(x[:, :, : lo * k]).reshape(n, c, lo, k)
    else:
        s0, s1, s2 = x.strides
        win = as_strided(x, (n, c, lo, k), (s0, s1, s2 * stride, s2))
    arg = win.argmax(axis=-1)
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    idx = arg + np.arange(lo, dtype=arg.dtype) * stride
    return np.ascontiguousarray(y), idx


def maxpool1d_backward(gy, idx, length, k=None, stride=None):
    n, c, lo = gy.shape
    gx = np.zeros((n, c, length), dtype=gy.dtype)
    if k is not None and k == stride:
        # non-overlapping pools scatter disjointly: one put per window
        arg = idx - np.arange(lo, dtype=idx.dtype) * stride
        win = gx[:, :, : lo * stride].reshape(n, c, lo, stride)
        np.put_along_axis(win, arg[..., None], gy[..., None], axis=-1)
        return gx
    flat = gx.reshape(n * c, length)
    rows = np.repeat(np.arange(n * c), lo)
    np.add.at(flat, (rows, idx.reshape(n * c * lo)), gy.reshape(n * c * lo))
    return gx


def maxpool2d_forward(x, k, stride):
    n, c, h, wd = x.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    s0, s1, s2, s3 = x.strides
    win = as_strided(
        x, (n, c, ho, wo, k, k), (s0, s1, s2 * stride, s3 * stride, s2, s3)
    )
    winf = win.reshape(n, c, ho, wo, k * k)  # copies; pooled maps are small
    arg = winf.argmax(axis=-1)
    y = np.take_along_axis(winf, arg[..., None], axis=-1)[..., 0]
    ih = arg // k
    iw = arg % k
    rows = ih + np.arange(ho, dtype=arg.dtype)[None, None, :, None] * stride
    cols = iw + np.arange(wo, dtype=arg.dtype)[None, None, None, :] * stride
    idx = rows * wd + cols  # flat index into (H, W)
    return np.ascontiguousarray(y), idx


def maxpool2d_backward(gy, idx, h, wd):
    n, c, ho, wo = gy.shape
    gx = np.zeros((n, c, h * wd), dtype=gy.dtype)
    flat = gx.reshape(n * c, h * wd)
    rows = np.repeat(np.arange(n * c), ho * wo)
    np.add.at(flat, (rows, idx.reshape(-1)), gy.reshape(-1))
    return gx.reshape(n, c, h, wd)
