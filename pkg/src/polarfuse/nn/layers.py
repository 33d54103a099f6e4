"""Stateful layers built on :mod:`polarfuse.nn.functional`.

A layer caches what its backward needs during ``forward`` and accumulates
parameter gradients (``+=``) during ``backward``. Call ``zero_grad`` between
optimisation steps.
"""

from __future__ import annotations

import numpy as np

from . import functional as F


class Parameter:
    def __init__(self, name, value):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Module:
    """Base class; subclasses register parameters and children in ``__init__``."""

    def parameters(self):
        out = []
        for value in vars(self).values():
            if isinstance(value, Parameter):
                out.append(value)
            elif isinstance(value, Module):
                out.extend(value.parameters())
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
        return out

    def named_arrays(self):
        return {p.name: p.value for p in self.parameters()}

    def load_arrays(self, arrays):
        for p in self.parameters():
            if p.name not in arrays:
                raise KeyError(f"missing parameter {p.name!r}")
            if arrays[p.name].shape != p.value.shape:
                raise ValueError(f"shape mismatch for {p.name!r}: {arrays[p.name].shape} vs {p.value.shape}")
            p.value[...] = arrays[p.name]

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0

    def num_parameters(self):
        return sum(p.value.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=None, *, rng, name="conv"):
        if padding is None:
            padding = kernel_size // 2
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(f"{name}.weight", he_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels))
        self.stride = stride
        self.padding = padding
        self._cache = None

    def forward(self, x):
        out, self._cache = F.conv2d(x, self.weight.value, self.bias.value, self.stride, self.padding)
        return out

    def backward(self, dout):
        dx, dw, db = F.conv2d_backward(dout, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class Linear(Module):
    def __init__(self, in_features, out_features, *, rng, name="linear"):
        self.weight = Parameter(f"{name}.weight", he_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features))
        self._x = None

    def forward(self, x):
        self._x = x
        return F.linear(x, self.weight.value, self.bias.value)

    def backward(self, dout):
        dx, dw, db = F.linear_backward(dout, self._x, self.weight.value)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


class ReLU(Module):
    def forward(self, x):
        self._x = x
        return F.relu(x)

    def backward(self, dout):
        return F.relu_backward(dout, self._x)


class SiLU(Module):
    def forward(self, x):
        self._x = x
        return F.silu(x)

    def backward(self, dout):
        return F.silu_backward(dout, self._x)


class Sigmoid(Module):
    def forward(self, x):
        self._y = F.sigmoid(x)
        return self._y

    def backward(self, dout):
        return F.sigmoid_backward(dout, self._y)


class AvgPool2(Module):
    def forward(self, x):
        return F.avgpool2(x)

    def backward(self, dout):
        return F.avgpool2_backward(dout)


class UpsampleNearest2(Module):
    def forward(self, x):
        return F.upsample_nearest2(x)

    def backward(self, dout):
        return F.upsample_nearest2_backward(dout)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout
