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

from typing import List, Optional, Sequence

import numpy as np

from pyuvos.data import MaskSequence
from pyuvos.errors import ShapeError
from pyuvos.models.mtt import FeedForward
from pyuvos.nn import Conv2d, LayerNorm, Module, make_norm
from pyuvos.tensor import Tensor, ops


class DWConvBlock(Module):
    """Depth-wise 7x7 conv, norm, ReLU."""

    def __init__(self, channels: int, rng: np.random.Generator, norm: str = "bn"):
        super().__init__()
        self.conv = Conv2d(channels, channels, 7, rng, padding=3, groups=channels)
        self.norm = make_norm(norm, channels)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


class SqueezeExcitation(Module):
    def __init__(self, channels: int, ratio: int, rng: np.random.Generator):
        super().__init__()
        hidden = max(1, channels // ratio)
        self.fc1 = Conv2d(channels, hidden, 1, rng)
        self.fc2 = Conv2d(hidden, channels, 1, rng)

    def weights(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.fc2(ops.relu(self.fc1(ops.global_avg_pool(x)))))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.weights(x)


class DecoderLevel(Module):
    """Refines a shallow feature, fusing the up-sampled output of the level below.

    `F_hat_shal = SE(DWConv(F_shal))`,
    `F = DWConv(Up(align(F_deep)) + F_hat_shal) + F_shal`,
    `out = FFN(LN(F)) + F`. The deepest level has no `F_deep` term.
    """

    def __init__(
        self,
        channels: int,
        deep_channels: Optional[int],
        rng: np.random.Generator,
        norm: str = "bn",
        se_ratio: int = 4,
        mlp_ratio: int = 4,
    ):
        super().__init__()
        self.shallow_conv = DWConvBlock(channels, rng, norm)
        self.se = SqueezeExcitation(channels, se_ratio, rng)
        self.align = Conv2d(deep_channels, channels, 1, rng, bias=False) if deep_channels else None
        self.fusion_conv = DWConvBlock(channels, rng, norm)
        self.norm = LayerNorm(channels)
        self.ffn = FeedForward(channels, mlp_ratio, rng)

    def forward(self, shallow: Tensor, deep: Optional[Tensor] = None) -> Tensor:
        f_hat = self.se(self.shallow_conv(shallow))
        if deep is None:
            f = self.fusion_conv(f_hat) + shallow
        else:
            if self.align is None:
                raise ShapeError("deepest decoder level takes no deep feature")
            if deep.shape[2] * 2 != shallow.shape[2] or deep.shape[3] * 2 != shallow.shape[3]:
                raise ShapeError(f"deep feature {deep.shape} is not half the extent of {shallow.shape}")
            up = ops.upsample_bilinear(self.align(deep), 2)
            f = self.fusion_conv(up + f_hat) + shallow
        return self.ffn(self.norm(f)) + f

    decode_level = forward


class CascadedDecoder(Module):
    """Four decoder levels chained from the deepest stage to the shallowest."""

    def __init__(self, stage_channels: Sequence[int], rng: np.random.Generator, norm="bn", se_ratio=4, mlp_ratio=4):
        super().__init__()
        deeper = list(stage_channels[1:]) + [None]
        self.levels = [
            DecoderLevel(c, d, rng, norm, se_ratio, mlp_ratio) for c, d in zip(stage_channels, deeper)
        ]

    def decode_pyramid(self, features: Sequence[Tensor]) -> List[Tensor]:
        outputs: List[Optional[Tensor]] = [None] * 4
        deep = None
        for k in range(3, -1, -1):
            deep = self.levels[k](features[k], deep)
            outputs[k] = deep
        return outputs

    forward = decode_pyramid


class FPNDecoder(Module):
    """Plain top-down pyramid: `f_k = smooth(F_k + Up(align(f_k+1)))`."""

    def __init__(self, stage_channels: Sequence[int], rng: np.random.Generator):
        super().__init__()
        self.align = [Conv2d(stage_channels[k + 1], stage_channels[k], 1, rng) for k in range(3)]
        self.smooth = [Conv2d(c, c, 3, rng, padding=1) for c in stage_channels[:3]]

    def decode_pyramid(self, features: Sequence[Tensor]) -> List[Tensor]:
        outputs: List[Optional[Tensor]] = [None] * 4
        outputs[3] = features[3]
        for k in range(2, -1, -1):
            up = ops.upsample_bilinear(self.align[k](outputs[k + 1]), 2)
            outputs[k] = ops.relu(self.smooth[k](features[k] + up))
        return outputs

    forward = decode_pyramid


class MaskHeads(Module):
    """A 1x1 conv to one logit channel per level, resized to the output extent."""

    def __init__(self, stage_channels: Sequence[int], rng: np.random.Generator):
        super().__init__()
        self.heads = [Conv2d(c, 1, 1, rng) for c in stage_channels]

    def predict_masks(self, features: Sequence[Tensor], out_h: int, out_w: int) -> List[Tensor]:
        logits = []
        for head, feature in zip(self.heads, features):
            if out_h < feature.shape[2] or out_w < feature.shape[3]:
                raise ShapeError(f"output {out_h}x{out_w} smaller than level extent {feature.shape[2:]}")
            logits.append(ops.resize_bilinear(head(feature), out_h, out_w))
        return logits

    forward = predict_masks


def binarize(probabilities: np.ndarray) -> MaskSequence:
    """Foreground where `p > 0.5`; `p == 0.5` goes to background."""
    probabilities = np.asarray(probabilities)
    return MaskSequence(probabilities=probabilities, masks=(probabilities > 0.5).astype(np.uint8))
