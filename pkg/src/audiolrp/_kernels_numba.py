"""Numba-jitted kernel implementations.

Loop nests are ordered so every output element is accumulated by exactly
one parallel worker in a fixed order, keeping results deterministic
run-to-run. Signatures mirror ``_kernels_numpy``.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _pad1d(x, p):
    n, c, length = x.shape
    xp = np.zeros((n, c, length + 2 * p), dtype=x.dtype)
    xp[:, :, p : p + length] = x
    return xp


@njit(cache=True)
def _pad2d(x, p):
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xp[:, :, p : p + h, p : p + w] = x
    return xp


@njit(cache=True, parallel=True)
def _conv1d_forward_core(xp, w, stride, lo):
    n, c, _ = xp.shape
    o, _, k = w.shape
    y = np.zeros((n, o, lo), dtype=xp.dtype)
    for no in prange(n * o):
        i = no // o
        j = no % o
        for ci in range(c):
            for kk in range(k):
                wv = w[j, ci, kk]
                for t in range(lo):
                    y[i, j, t] += wv * xp[i, ci, t * stride + kk]
    return y


def conv1d_forward(x, w, stride, padding):
    _, _, length = x.shape
    k = w.shape[2]
    lo = (length + 2 * padding - k) // stride + 1
    xp = _pad1d(x, padding) if padding else np.ascontiguousarray(x)
    return _conv1d_forward_core(xp, np.ascontiguousarray(w), stride, lo)


@njit(cache=True, parallel=True)
def _conv1d_input_grad_core(gy, w, stride, lp):
    n, o, lo = gy.shape
    _, c, k = w.shape
    gxp = np.zeros((n, c, lp), dtype=gy.dtype)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for j in range(o):
            for kk in range(k):
                wv = w[j, ci, kk]
                for t in range(lo):
                    gxp[i, ci, t * stride + kk] += wv * gy[i, j, t]
    return gxp


def conv1d_input_grad(gy, w, stride, padding, length):
    gxp = _conv1d_input_grad_core(
        np.ascontiguousarray(gy), np.ascontiguousarray(w), stride, length + 2 * padding
    )
    if padding == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, padding : padding + length])


@njit(cache=True, parallel=True, fastmath=True)
def _conv1d_weight_grad_core(xp, gy, stride, k):
    n, c, _ = xp.shape
    _, o, lo = gy.shape
    gw = np.zeros((o, c, k), dtype=xp.dtype)
    for oc in prange(o * c):
        j = oc // c
        ci = oc % c
        for kk in range(k):
            acc = xp.dtype.type(0)
            for i in range(n):
                for t in range(lo):
                    acc += xp[i, ci, t * stride + kk] * gy[i, j, t]
            gw[j, ci, kk] = acc
    return gw


def conv1d_weight_grad(x, gy, stride, padding, k):
    xp = _pad1d(x, padding) if padding else np.ascontiguousarray(x)
    return _conv1d_weight_grad_core(xp, np.ascontiguousarray(gy), stride, k)


@njit(cache=True, parallel=True)
def _conv2d_forward_core(xp, w, stride, ho, wo):
    n, c, _, _ = xp.shape
    o, _, kh, kw = w.shape
    y = np.zeros((n, o, ho, wo), dtype=xp.dtype)
    for no in prange(n * o):
        i = no // o
        j = no % o
        for ci in range(c):
            for jh in range(kh):
                for jw in range(kw):
                    wv = w[j, ci, jh, jw]
                    for th in range(ho):
                        row = th * stride + jh
                        for tw in range(wo):
                            y[i, j, th, tw] += wv * xp[i, ci, row, tw * stride + jw]
    return y


def conv2d_forward(x, w, stride, padding):
    _, _, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = _pad2d(x, padding) if padding else np.ascontiguousarray(x)
    return _conv2d_forward_core(xp, np.ascontiguousarray(w), stride, ho, wo)


@njit(cache=True, parallel=True)
def _conv2d_input_grad_core(gy, w, stride, hp, wp):
    n, o, ho, wo = gy.shape
    _, c, kh, kw = w.shape
    gxp = np.zeros((n, c, hp, wp), dtype=gy.dtype)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for j in range(o):
            for jh in range(kh):
                for jw in range(kw):
                    wv = w[j, ci, jh, jw]
                    for th in range(ho):
                        row = th * stride + jh
                        for tw in range(wo):
                            gxp[i, ci, row, tw * stride + jw] += wv * gy[i, j, th, tw]
    return gxp


def conv2d_input_grad(gy, w, stride, padding, h, wd):
    gxp = _conv2d_input_grad_core(
        np.ascontiguousarray(gy),
        np.ascontiguousarray(w),
        stride,
        h + 2 * padding,
        wd + 2 * padding,
    )
    if padding == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, padding : padding + h, padding : padding + wd])


@njit(cache=True, parallel=True, fastmath=True)
def _conv2d_weight_grad_core(xp, gy, stride, kh, kw):
    n, c, _, _ = xp.shape
    _, o, ho, wo = gy.shape
    gw = np.zeros((o, c, kh, kw), dtype=xp.dtype)
    for oc in prange(o * c):
        j = oc // c
        ci = oc % c
        for jh in range(kh):
            for jw in range(kw):
                acc = xp.dtype.type(0)
                for i in range(n):
                    for th in range(ho):
                        row = th * stride + jh
                        for tw in range(wo):
                            acc += xp[i, ci, row, tw * stride + jw] * gy[i, j, th, tw]
                gw[j, ci, jh, jw] = acc
    return gw


def conv2d_weight_grad(x, gy, stride, padding, kh, kw):
    xp = _pad2d(x, padding) if padding else np.ascontiguousarray(x)
    return _conv2d_weight_grad_core(xp, np.ascontiguousarray(gy), stride, kh, kw)


@njit(cache=True, parallel=True)
def _maxpool1d_forward_core(x, k, stride, lo):
    n, c, _ = x.shape
    y = np.empty((n, c, lo), dtype=x.dtype)
    idx = np.empty((n, c, lo), dtype=np.int64)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for t in range(lo):
            base = t * stride
            best = x[i, ci, base]
            arg = base
            for kk in range(1, k):
                v = x[i, ci, base + kk]
                if v > best:  # strict: ties keep the lowest index
                    best = v
                    arg = base + kk
            y[i, ci, t] = best
            idx[i, ci, t] = arg
    return y, idx


def maxpool1d_forward(x, k, stride):
    lo = (x.shape[2] - k) // stride + 1
    return _maxpool1d_forward_core(np.ascontiguousarray(x), k, stride, lo)


def maxpool1d_backward(gy, idx, length, k=None, stride=None):
    return _maxpool1d_backward_core(np.ascontiguousarray(gy), idx, length)


@njit(cache=True, parallel=True)
def _maxpool1d_backward_core(gy, idx, length):
    n, c, lo = gy.shape
    gx = np.zeros((n, c, length), dtype=gy.dtype)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for t in range(lo):
            gx[i, ci, idx[i, ci, t]] += gy[i, ci, t]
    return gx


@njit(cache=True, parallel=True)
def _maxpool2d_forward_core(x, k, stride, ho, wo):
    n, c, _, wd = x.shape
    y = np.empty((n, c, ho, wo), dtype=x.dtype)
    idx = np.empty((n, c, ho, wo), dtype=np.int64)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for th in range(ho):
            for tw in range(wo):
                h0 = th * stride
                w0 = tw * stride
                best = x[i, ci, h0, w0]
                arg = h0 * wd + w0
                for jh in range(k):
                    for jw in range(k):
                        v = x[i, ci, h0 + jh, w0 + jw]
                        if v > best:
                            best = v
                            arg = (h0 + jh) * wd + (w0 + jw)
                y[i, ci, th, tw] = best
                idx[i, ci, th, tw] = arg
    return y, idx


def maxpool2d_forward(x, k, stride):
    ho = (x.shape[2] - k) // stride + 1
    wo = (x.shape[3] - k) // stride + 1
    return _maxpool2d_forward_core(np.ascontiguousarray(x), k, stride, ho, wo)


@njit(cache=True, parallel=True)
def _maxpool2d_backward_core(gy, idx, h, wd):
    n, c, ho, wo = gy.shape
    gx = np.zeros((n, c, h, wd), dtype=gy.dtype)
    for nc in prange(n * c):
        i = nc // c
        ci = nc % c
        for th in range(ho):
            for tw in range(wo):
                flat = idx[i, ci, th, tw]
                gx[i, ci, flat // wd, flat % wd] += gy[i, ci, th, tw]
    return gx


def maxpool2d_backward(gy, idx, h, wd):
    return _maxpool2d_backward_core(np.ascontiguousarray(gy), idx, h, wd)
