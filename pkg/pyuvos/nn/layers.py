#  Copyright 2022 Upstream Data Inc
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.

from typing import Optional

import numpy as np

from pyuvos.errors import ConfigError, ShapeError
from pyuvos.nn.module import Module, Parameter
from pyuvos.tensor import Tensor, ops
from pyuvos.tensor.tensor import default_dtype


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        groups: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ShapeError(f"groups={groups} does not divide {in_channels}->{out_channels}")
        self.stride, self.padding, self.groups = stride, padding, groups
        fan_in = in_channels // groups * kernel_size * kernel_size
        self.weight = Parameter(
            fan_in_uniform(rng, (out_channels, in_channels // groups, kernel_size, kernel_size), fan_in)
        )
        self.bias = Parameter(fan_in_uniform(rng, (out_channels,), fan_in)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class Linear(Module):
    """`x[..., in] @ W[in, out] + b`; the matmul is reported under `tag` when set."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = Parameter(fan_in_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(fan_in_uniform(rng, (out_features,), in_features)) if bias else None

    def forward(self, x: Tensor, tag: Optional[str] = None) -> Tensor:
        out = ops.matmul(x, self.weight, tag=tag)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    """Normalise over one axis (channels of `[N, C, H, W]` by default)."""

    def __init__(self, channels: int, axis: int = 1, eps: float = 1e-6):
        super().__init__()
        self.axis, self.eps = axis, eps
        self.weight = Parameter(np.ones(channels, dtype=default_dtype()))
        self.bias = Parameter(np.zeros(channels, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, axis=self.axis, eps=self.eps)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.weight = Parameter(np.ones(channels, dtype=default_dtype()))
        self.bias = Parameter(np.zeros(channels, dtype=default_dtype()))
        self.register_buffer("running_mean", np.zeros(channels, dtype=default_dtype()))
        self.register_buffer("running_var", np.ones(channels, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        if not self.training:
            return ops.batch_norm(
                x, self.weight, self.bias, self._buffers["running_mean"], self._buffers["running_var"], self.eps
            )
        count = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3), ddof=1 if count > 1 else 0)
        m = self.momentum
        self._buffers["running_mean"] = ((1 - m) * self._buffers["running_mean"] + m * mean).astype(x.dtype)
        self._buffers["running_var"] = ((1 - m) * self._buffers["running_var"] + m * var).astype(x.dtype)
        return ops.batch_norm(x, self.weight, self.bias, eps=self.eps)


def make_norm(kind: str, channels: int) -> Module:
    """`bn` for batch norm, `ln` for channel layer norm."""
    if kind == "bn":
        return BatchNorm2d(channels)
    if kind == "ln":
        return LayerNorm(channels)
    raise ConfigError(f"unknown norm kind: {kind}")
