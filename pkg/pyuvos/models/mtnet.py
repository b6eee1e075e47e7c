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

import logging
from typing import List

import numpy as np

from pyuvos.config import ModelConfig
from pyuvos.errors import ShapeError
from pyuvos.models.backbone import Encoder, TwoStreamEncoder
from pyuvos.models.bfm import BiModalFusion
from pyuvos.models.ctd import CascadedDecoder, FPNDecoder, MaskHeads
from pyuvos.models.mtt import MixedTemporalTransformer
from pyuvos.nn import Module
from pyuvos.tensor import Tensor, no_grad, ops


class MTNet(Module):
    """Two-stream video segmentation network.

    Frames and flow maps are encoded into four-stage pyramids, fused per stage,
    passed through temporal transformers at the two deepest stages, decoded
    deep-to-shallow and turned into one full-resolution logit map per level.

    Parameters:
        config: Architecture; `use_bfm`, `use_mtt`, `use_ctd` and `modality`
            select the ablation variant.
        seed: Seeds the weight initialisation.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        widths = config.stage_channels
        if config.modality == "both":
            self.encoder = TwoStreamEncoder(
                widths, rng, config.backbone_depth, shared=not config.separate_streams
            )
        else:
            self.encoder = Encoder(widths, rng, config.backbone_depth)
        self.fusion = []
        if config.modality == "both" and config.use_bfm:
            self.fusion = [BiModalFusion(c, rng, config.ca_ratio, config.spatial_kernel) for c in widths]
        self.temporal = []
        if config.use_mtt:
            self.temporal = [
                MixedTemporalTransformer(
                    widths[k],
                    config.heads,
                    config.window,
                    config.sr_ratios[k - 2],
                    rng,
                    config.mtt_depth,
                    config.mlp_ratio,
                    config.pos_encoding,
                )
                for k in (2, 3)
            ]
        if config.use_ctd:
            self.decoder = CascadedDecoder(widths, rng, config.decoder_norm, config.se_ratio, config.mlp_ratio)
        else:
            self.decoder = FPNDecoder(widths, rng)
        self.heads = MaskHeads(widths, rng)
        logging.debug(f"MTNet: {self.num_parameters()} parameters, config={config.as_dict()}")

    def features(self, frames: Tensor, flows: Tensor) -> List[Tensor]:
        """Per-stage fused features, before the temporal transformers."""
        if self.config.modality == "appearance":
            return list(self.encoder.encode(frames))
        if self.config.modality == "motion":
            return list(self.encoder.encode(flows))
        appearance, motion = self.encoder.encode_pair(frames, flows)
        if self.fusion:
            return [bfm.fuse(a, m) for bfm, a, m in zip(self.fusion, appearance, motion)]
        return [a + m for a, m in zip(appearance, motion)]

    def forward(self, frames: Tensor, flows: Tensor) -> List[Tensor]:
        """Logits `P1..P4`, each `[T, 1, H, W]` at the input extent."""
        if frames.shape != flows.shape:
            raise ShapeError(f"frames {frames.shape} and flows {flows.shape} differ")
        features = self.features(frames, flows)
        for k, transformer in zip((2, 3), self.temporal):
            features[k] = transformer(features[k])
        decoded = self.decoder.decode_pyramid(features)
        return self.heads.predict_masks(decoded, frames.shape[2], frames.shape[3])

    def predict(self, frames: Tensor, flows: Tensor) -> np.ndarray:
        """Foreground probabilities of the main head, `[T, H, W]`, without recording grads."""
        with no_grad():
            logits = self.forward(frames, flows)[0]
            return ops.sigmoid(logits).data[:, 0]
