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

from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from pyuvos.errors import ShapeError
from pyuvos.nn import Conv2d, LayerNorm, Module
from pyuvos.tensor import Tensor, ops

STAGE_STRIDES = (4, 8, 16, 32)


@dataclass
class FeaturePyramid:
    """Per-stage clip features at strides 4, 8, 16 and 32.

    Attributes:
        stages: Four `[T, C_k, H / s_k, W / s_k]` tensors, shallowest first.
    """

    stages: List[Tensor]

    def __post_init__(self):
        if len(self.stages) != 4:
            raise ShapeError(f"a feature pyramid has 4 stages, got {len(self.stages)}")

    def __getitem__(self, item: int) -> Tensor:
        return self.stages[item]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.stages)

    def __len__(self) -> int:
        return len(self.stages)

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [stage.shape for stage in self.stages]


class ConvNeXtBlock(Module):
    """dw7x7 -> LN -> pw expand -> ReLU -> pw project, plus residual."""

    def __init__(self, dim: int, mlp_ratio: int, rng: np.random.Generator):
        super().__init__()
        self.dwconv = Conv2d(dim, dim, 7, rng, padding=3, groups=dim)
        self.norm = LayerNorm(dim)
        self.pwconv1 = Conv2d(dim, dim * mlp_ratio, 1, rng)
        self.pwconv2 = Conv2d(dim * mlp_ratio, dim, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.pwconv2(ops.relu(self.pwconv1(self.norm(self.dwconv(x)))))
        return x + y


class EncoderStage(Module):
    def __init__(self, in_dim: int, out_dim: int, first: bool, depth: int, mlp_ratio: int, rng):
        super().__init__()
        self.first = first
        if first:
            # patchify stem
            self.down = Conv2d(in_dim, out_dim, 4, rng, stride=4)
            self.norm = LayerNorm(out_dim)
        else:
            self.norm = LayerNorm(in_dim)
            self.down = Conv2d(in_dim, out_dim, 2, rng, stride=2)
        self.blocks = [ConvNeXtBlock(out_dim, mlp_ratio, rng) for _ in range(depth)]

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm(self.down(x)) if self.first else self.down(self.norm(x))
        for block in self.blocks:
            x = block(x)
        return x


class Encoder(Module):
    """A tiny ConvNeXt-shaped encoder producing a four-stage pyramid."""

    def __init__(
        self,
        stage_channels: Sequence[int],
        rng: np.random.Generator,
        depth: int = 2,
        mlp_ratio: int = 4,
        in_channels: int = 3,
    ):
        super().__init__()
        widths = [in_channels] + list(stage_channels)
        self.stages = [
            EncoderStage(widths[i], widths[i + 1], i == 0, depth, mlp_ratio, rng) for i in range(4)
        ]

    def encode(self, frames: Tensor) -> FeaturePyramid:
        """Map `[T, 3, H, W]` frames (H, W multiples of 32) to a `FeaturePyramid`."""
        if frames.ndim != 4:
            raise ShapeError(f"encoder expects [T, C, H, W] input, got {frames.shape}")
        if frames.shape[2] % 32 or frames.shape[3] % 32:
            raise ShapeError(f"input extent {frames.shape[2]}x{frames.shape[3]} is not a multiple of 32")
        stages = []
        x = frames
        for stage in self.stages:
            x = stage(x)
            stages.append(x)
        return FeaturePyramid(stages)

    forward = encode


class TwoStreamEncoder(Module):
    """Encodes frames and flow maps, by default with one shared weight set.

    With `shared=True` the `appearance` and `motion` attributes are the same
    `Encoder` object, so its parameters are enumerated (and counted) once.
    """

    def __init__(self, stage_channels: Sequence[int], rng: np.random.Generator, depth: int = 2, shared: bool = True):
        super().__init__()
        self.shared = shared
        self.appearance = Encoder(stage_channels, rng, depth)
        self.motion = self.appearance if shared else Encoder(stage_channels, rng, depth)

    def encode_pair(self, frames: Tensor, flows: Tensor) -> Tuple[FeaturePyramid, FeaturePyramid]:
        if frames.shape != flows.shape:
            raise ShapeError(f"frames {frames.shape} and flows {flows.shape} differ")
        return self.appearance.encode(frames), self.motion.encode(flows)

    forward = encode_pair
