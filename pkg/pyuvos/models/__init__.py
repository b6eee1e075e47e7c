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
from dataclasses import replace

from pyuvos.config import ModelConfig
from pyuvos.errors import ConfigError
from pyuvos.models.backbone import Encoder, FeaturePyramid, TwoStreamEncoder
from pyuvos.models.bfm import BiModalFusion
from pyuvos.models.ctd import CascadedDecoder, DecoderLevel, FPNDecoder, MaskHeads, binarize
from pyuvos.models.mtnet import MTNet
from pyuvos.models.mtt import (
    GlobalTemporalAttention,
    LocalTemporalAttention,
    MixedTemporalBlock,
    MixedTemporalTransformer,
    count_attention_flops,
)

# config overrides for each ablation row
MODEL_VARIANTS = {
    "MTNet": {},
    "Baseline": {"use_bfm": False, "use_mtt": False, "use_ctd": False},
    "w/ BFM": {"use_mtt": False, "use_ctd": False},
    "w/ MTT": {"use_bfm": False, "use_ctd": False},
    "w/ CTD": {"use_bfm": False, "use_mtt": False},
    "w/ BFM+MTT": {"use_ctd": False},
    "w/ BFM+CTD": {"use_mtt": False},
    "Input Appearance": {"modality": "appearance"},
    "Input Motion": {"modality": "motion"},
}


def get_model(config: ModelConfig = None, variant: str = "MTNet", seed: int = 0) -> MTNet:
    """Build a model variant by name.

    Parameters:
        config: Base architecture, defaults to `ModelConfig()`.
        variant: A key of `MODEL_VARIANTS`.
        seed: Weight initialisation seed.
    """
    if variant not in MODEL_VARIANTS:
        raise ConfigError(f"unknown model variant {variant!r}, expected one of {', '.join(MODEL_VARIANTS)}")
    config = replace(config or ModelConfig(), **MODEL_VARIANTS[variant])
    logging.debug(f"building {variant}")
    return MTNet(config, seed)


__all__ = [
    "BiModalFusion",
    "CascadedDecoder",
    "DecoderLevel",
    "Encoder",
    "FPNDecoder",
    "FeaturePyramid",
    "GlobalTemporalAttention",
    "LocalTemporalAttention",
    "MODEL_VARIANTS",
    "MTNet",
    "MaskHeads",
    "MixedTemporalBlock",
    "MixedTemporalTransformer",
    "TwoStreamEncoder",
    "binarize",
    "count_attention_flops",
    "get_model",
]
