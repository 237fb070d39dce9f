"""Dispatch to the active kernel backend (see ``audiolrp.backend``)."""

import importlib

from . import backend

_impls = {}


def _impl():
    name = backend.active_backend()
    mod = _impls.get(name)
    if mod is None:
        mod = importlib.import_module(f"._kernels_{name}", package=__package__)
        _impls[name] = mod
    return mod


def conv1d_forward(x, w, stride=1, padding=0):
    return _impl().conv1d_forward(x, w, stride, padding)


def conv1d_input_grad(gy, w, stride, padding, length):
    return _impl().conv1d_input_grad(gy, w, stride, padding, length)


def conv1d_weight_grad(x, gy, stride, padding, k):
    return _impl().conv1d_weight_grad(x, gy, stride, padding, k)


def conv2d_forward(x, w, stride=1, padding=0):
    return _impl().conv2d_forward(x, w, stride, padding)


def conv2d_input_grad(gy, w, stride, padding, h, wd):
    return _impl().conv2d_input_grad(gy, w, stride, padding, h, wd)


def conv2d_weight_grad(x, gy, stride, padding, kh, kw):
    return _impl().conv2d_weight_grad(x, gy, stride, padding, kh, kw)


def maxpool1d_forward(x, k, stride):
    return _impl().maxpool1d_forward(x, k, stride)


def maxpool1d_backward(gy, idx, length, k=None, stride=None):
    return _impl().maxpool1d_backward(gy, idx, length, k, stride)


def maxpool2d_forward(x, k, stride):
    return _impl().maxpool2d_forward(x, k, stride)


def maxpool2d_backward(gy, idx, h, wd):
    return _impl().maxpool2d_backward(gy, idx, h, wd)
