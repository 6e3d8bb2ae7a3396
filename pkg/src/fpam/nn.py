"""Thin layer classes that register their parameters in a shared ParamStore.

Construction order is fixed, and every parameter is drawn from a single
generator threaded through the model builder, so identical seeds give
bitwise-identical parameters.
"""
from __future__ import annotations

import math

import numpy as np

from .ops import conv2d, global_pool, linear
from .optim import ParamStore
from .tensor import Tensor, default_dtype, reshape


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    limit = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(default_dtype()))


class Conv2d:
    def __init__(self, store: ParamStore, name: str, rng, cin: int, cout: int,
                 kernel: int, stride: int = 1, padding: int = 0):
        fan_in = cin * kernel * kernel
        self.weight = store.add(f"{name}.weight", he_uniform(rng, (cout, cin, kernel, kernel), fan_in))
        self.bias = store.add(f"{name}.bias", Tensor(np.zeros(cout, dtype=default_dtype())))
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear:
    def __init__(self, store: ParamStore, name: str, rng, d_in: int, d_out: int):
        self.weight = store.add(f"{name}.weight", he_uniform(rng, (d_in, d_out), d_in))
        self.bias = store.add(f"{name}.bias", Tensor(np.zeros(d_out, dtype=default_dtype())))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


def spatial_mean_flatten(x):
    """Global average pool followed by flattening to N x C."""
    pooled = global_pool(x, "avg")
    n, c = pooled.dims[0], pooled.dims[1]
    return reshape(pooled, (n, c))
