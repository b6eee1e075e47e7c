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

"""Bi-modal fusion of appearance and motion features.

A gate unit re-scales each modality by per-channel weights learned from both
streams, then co-channel and co-spatial attention over the concatenation yield a
map `R` in [0, 1] that blends the two: `B = R * A + (1 - R) * M`.
"""

from typing import Tuple

import numpy as np

from pyuvos.nn import Conv2d, Module
from pyuvos.tensor import Tensor, ops
from pyuvos.tensor.tensor import check_same_shape


class GateUnit(Module):
    """Per-modality channel gates.

    Each stream is squeezed to C/2 channels by a 1x1 conv; the concatenation goes
    through a 3x3 fusion conv to 2C channels, which splits into one C-channel half
    per modality. Gates are `GAP(sigmoid(half))`, shape `[T, C, 1, 1]`.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.squeeze_appearance = Conv2d(channels, channels // 2, 1, rng)
        self.squeeze_motion = Conv2d(channels, channels // 2, 1, rng)
        self.fusion = Conv2d(channels, 2 * channels, 3, rng, padding=1)

    def gates(self, appearance: Tensor, motion: Tensor) -> Tuple[Tensor, Tensor]:
        check_same_shape(appearance, motion, "gate unit")
        fused = self.fusion(
            ops.concat([self.squeeze_appearance(appearance), self.squeeze_motion(motion)], axis=1)
        )
        half_a, half_m = ops.split(fused, 2, axis=1)
        return ops.global_avg_pool(ops.sigmoid(half_a)), ops.global_avg_pool(ops.sigmoid(half_m))

    def forward(self, appearance: Tensor, motion: Tensor) -> Tuple[Tensor, Tensor]:
        g_a, g_m = self.gates(appearance, motion)
        return appearance * g_a, motion * g_m


class CoChannelAttention(Module):
    """Shared two-layer 1x1 bottleneck on avg- and max-pooled descriptors, summed."""

    def __init__(self, channels: int, ratio: int, rng: np.random.Generator):
        super().__init__()
        hidden = max(1, channels // ratio)
        self.fc1 = Conv2d(channels, hidden, 1, rng)
        self.fc2 = Conv2d(hidden, channels, 1, rng)

    def _path(self, pooled: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(pooled)))

    def forward(self, r: Tensor) -> Tensor:
        return self._path(ops.global_avg_pool(r)) + self._path(ops.global_max_pool(r))


class CoSpatialAttention(Module):
    def __init__(self, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(2, 1, kernel, rng, padding=kernel // 2)

    def forward(self, r: Tensor) -> Tensor:
        descriptors = ops.concat([ops.reduce(r, "mean", axis=1), ops.reduce(r, "max", axis=1)], axis=1)
        return self.conv(descriptors)


class BiModalFusion(Module):
    """One fusion module per encoder stage."""

    def __init__(self, channels: int, rng: np.random.Generator, ca_ratio: int = 4, spatial_kernel: int = 7):
        super().__init__()
        self.channels = channels
        self.gate_unit = GateUnit(channels, rng)
        self.channel_attention = CoChannelAttention(2 * channels, ca_ratio, rng)
        self.spatial_attention = CoSpatialAttention(spatial_kernel, rng)

    def co_attention(self, a_hat: Tensor, m_hat: Tensor) -> Tensor:
        """The re-weighting map over the first C channels, values in [0, 1]."""
        r = ops.concat([a_hat, m_hat], axis=1)
        r_hat = ops.sigmoid(self.channel_attention(r) + self.spatial_attention(r))
        return r_hat[:, : self.channels]

    def fuse(self, appearance: Tensor, motion: Tensor) -> Tensor:
        a_hat, m_hat = self.gate_unit(appearance, motion)
        r_hat = self.co_attention(a_hat, m_hat)
        # convex blend written so that equal inputs pass through bit-exactly
        return m_hat + r_hat * (a_hat - m_hat)

    forward = fuse
