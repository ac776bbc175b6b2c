"""Parameter-holding layer objects over the functional kernels.

Each layer caches exactly one in-flight forward; training is single-writer by
contract, so that is all the bookkeeping the models need. Initialization is
He-uniform, seeded per layer from the run seed for reproducible runs.
"""
from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from . import ops


class Param:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad: Optional[np.ndarray] = None

    def add_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.value.dtype, copy=True)
        else:
            self.grad += g


class Layer:
    name = "layer"

    def params(self) -> list[Param]:
        return []

    def zero_grad(self):
        for p in self.params():
            p.grad = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv3d(Layer):
    name = "conv3d"

    def __init__(self, cin: int, cout: int, k: int = 3, stride: int = 1, pad: int = 1,
                 bias: bool = True, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad = stride, pad
        self.w = Param("w", he_uniform(rng, (cout, cin, k, k, k), cin * k ** 3))
        self.b = Param("b", np.zeros(cout, dtype=np.float32)) if bias else None
        self._cache = None

    def params(self):
        return [self.w] + ([self.b] if self.b else [])

    def forward(self, x):
        y, self._cache = ops.conv3d_forward(x, self.w.value, self.b.value if self.b else None,
                                            stride=self.stride, pad=self.pad)
        return y

    def backward(self, grad_out):
        gx, gw, gb = ops.conv3d_backward(grad_out, self._cache)
        self.w.add_grad(gw)
        if self.b is not None:
            self.b.add_grad(gb)
        return gx


class TransposedConv3d(Layer):
    name = "transposed_conv3d"

    def __init__(self, cin: int, cout: int, stride: int = 2, bias: bool = True,
                 rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.stride = stride
        self.w = Param("w", he_uniform(rng, (cin, cout, stride, stride, stride), cin))
        self.b = Param("b", np.zeros(cout, dtype=np.float32)) if bias else None
        self._cache = None

    def params(self):
        return [self.w] + ([self.b] if self.b else [])

    def forward(self, x):
        y, self._cache = ops.transposed_conv3d_forward(x, self.w.value,
                                                       self.b.value if self.b else None,
                                                       stride=self.stride)
        return y

    def backward(self, grad_out):
        gx, gw, gb = ops.transposed_conv3d_backward(grad_out, self._cache)
        self.w.add_grad(gw)
        if self.b is not None:
            self.b.add_grad(gb)
        return gx


class InstanceNorm3d(Layer):
    name = "instance_norm3d"

    def __init__(self, channels: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Param("gamma", np.ones(channels, dtype=np.float32))
        self.beta = Param("beta", np.zeros(channels, dtype=np.float32))
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        y, self._cache = ops.instance_norm3d_forward(x, self.gamma.value, self.beta.value, self.eps)
        return y

    def backward(self, grad_out):
        gx, ggamma, gbeta = ops.instance_norm3d_backward(grad_out, self._cache)
        self.gamma.add_grad(ggamma)
        self.beta.add_grad(gbeta)
        return gx


class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        y, self._cache = ops.relu_forward(x)
        return y

    def backward(self, grad_out):
        return ops.relu_backward(grad_out, self._cache)


class LeakyReLU(Layer):
    name = "leaky_relu"

    def __init__(self, alpha: float = 0.01):
        self.alpha = alpha

    def forward(self, x):
        y, self._cache = ops.leaky_relu_forward(x, self.alpha)
        return y

    def backward(self, grad_out):
        return ops.leaky_relu_backward(grad_out, self._cache)


class Sigmoid(Layer):
    name = "sigmoid"

    def forward(self, x):
        y, self._cache = ops.sigmoid_forward(x)
        return y

    def backward(self, grad_out):
        return ops.sigmoid_backward(grad_out, self._cache)


class Softmax(Layer):
    name = "softmax"

    def __init__(self, axis: int = 1):
        self.axis = axis

    def forward(self, x):
        y, self._cache = ops.softmax_forward(x, self.axis)
        return y

    def backward(self, grad_out):
        return ops.softmax_backward(grad_out, self._cache)


class MaxPool3d(Layer):
    name = "maxpool3d"

    def forward(self, x):
        y, self._cache = ops.maxpool3d_forward(x)
        return y

    def backward(self, grad_out):
        return ops.maxpool3d_backward(grad_out, self._cache)


class NearestUpsample3d(Layer):
    name = "nearest_upsample3d"

    def forward(self, x):
        y, self._cache = ops.nearest_upsample3d_forward(x)
        return y

    def backward(self, grad_out):
        return ops.nearest_upsample3d_backward(grad_out, self._cache)


class GlobalAvgPool3d(Layer):
    name = "global_avg_pool3d"

    def forward(self, x):
        y, self._cache = ops.global_avg_pool3d_forward(x)
        return y

    def backward(self, grad_out):
        return ops.global_avg_pool3d_backward(grad_out, self._cache)


class Linear(Layer):
    name = "linear"

    def __init__(self, fin: int, fout: int, bias: bool = True,
                 rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.w = Param("w", he_uniform(rng, (fin, fout), fin))
        self.b = Param("b", np.zeros(fout, dtype=np.float32)) if bias else None
        self._cache = None

    def params(self):
        return [self.w] + ([self.b] if self.b else [])

    def forward(self, x):
        y, self._cache = ops.linear_forward(x, self.w.value, self.b.value if self.b else None)
        return y

    def backward(self, grad_out):
        gx, gw, gb = ops.linear_backward(grad_out, self._cache)
        self.w.add_grad(gw)
        if self.b is not None:
            self.b.add_grad(gb)
        return gx


class Sequential(Layer):
    name = "sequential"

    def __init__(self, layers: Iterable[Layer]):
        self.layers = list(layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out
