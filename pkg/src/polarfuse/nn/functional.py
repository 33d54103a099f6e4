"""Forward and hand-derived backward kernels on NCHW float arrays.

Every ``*_backward`` takes the upstream gradient plus whatever the forward
needs and returns gradients in the order of the forward's array arguments.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, IntegrityError


def check_finite(x, where="tensor"):
    if not np.all(np.isfinite(x)):
        raise IntegrityError(f"non-finite values in {where}")
    return x


def _im2col(x, k, stride, padding):
    """Columns laid out ``(C*k*k, N*Ho*Wo)`` so the inner axis stays contiguous."""
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)
    return cols, ho, wo


def conv2d(x, weight, bias, stride=1, padding=0):
    """Zero-padded cross-correlation. Returns ``(out, cache)``."""
    if x.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input, got shape {x.shape}")
    out_c, in_c, kh, kw = weight.shape
    if kh != kw or kh not in (1, 3):
        raise DimensionError(f"only 1x1 and 3x3 kernels are supported, got {kh}x{kw}")
    if x.shape[1] != in_c:
        raise DimensionError(f"conv2d input has {x.shape[1]} channels, weight expects {in_c}")
    if bias.shape != (out_c,):
        raise DimensionError(f"bias shape {bias.shape} does not match {out_c} output channels")
    cols, ho, wo = _im2col(x, kh, stride, padding)
    out = weight.reshape(out_c, -1) @ cols
    out += bias[:, None]
    out = out.reshape(out_c, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), (x.shape, cols, weight, stride, padding, ho, wo)


def conv2d_backward(dout, cache):
    x_shape, cols, weight, stride, padding, ho, wo = cache
    n, c, h, w = x_shape
    out_c, _, k, _ = weight.shape
    d2 = dout.transpose(1, 0, 2, 3).reshape(out_c, -1)
    dweight = (d2 @ cols.T).reshape(weight.shape)
    dbias = d2.sum(axis=1)
    if stride == 1:
        # input gradient is a full correlation with the flipped, transposed kernel
        flipped = np.ascontiguousarray(weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx, _ = conv2d(dout, flipped, np.zeros(c, dtype=dout.dtype), 1, k - 1 - padding)
        return dx, dweight, dbias
    dcols = (weight.reshape(out_c, -1).T @ d2).reshape(c, k, k, n, ho, wo)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp), dweight, dbias


def linear(x, weight, bias):
    """``x @ weight.T + bias`` for ``x`` of shape ``(N, in)``."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear input width {x.shape[-1]} != {weight.shape[1]}")
    return x @ weight.T + bias


def linear_backward(dout, x, weight):
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    return dout * (x > 0)


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_backward(dout, y):
    """Gradient given the sigmoid *output* ``y``."""
    return dout * y * (1.0 - y)


def silu(x):
    return x * sigmoid(x)


def silu_backward(dout, x):
    s = sigmoid(x)
    return dout * (s * (1.0 + x * (1.0 - s)))


def avgpool2(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avgpool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2_backward(dout):
    return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25


def upsample_nearest2(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample_nearest2_backward(dout):
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def mse_loss(pred, target):
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_loss_backward(pred, target):
    return 2.0 * (pred - target) / pred.size
