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

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Literal, Tuple, Union

import toml
import yaml

from pyuvos.errors import ConfigError


class _ConfigBase:
    def as_dict(self) -> dict:
        """Convert the data in this class to a dict."""
        data_dict = asdict(self)
        for key in asdict(self).keys():
            if data_dict[key] is None:
                del data_dict[key]
            elif isinstance(data_dict[key], tuple):
                data_dict[key] = list(data_dict[key])
        return data_dict

    def as_toml(self) -> str:
        """Convert the data in this class to toml."""
        return toml.dumps(self.as_dict())

    def as_yaml(self) -> str:
        """Convert the data in this class to yaml."""
        return yaml.dump(self.as_dict(), sort_keys=False)

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def from_dict(self, data: dict):
        """Convert a dict of settings into usable data and save it to this class.

        Parameters:
            data: The dict config data to convert. Unknown keys raise `ConfigError`.
        """
        known = self.keys()
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown {type(self).__name__} key: {key}")
            current = getattr(self, key)
            if isinstance(current, tuple):
                value = tuple(value)
            elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            setattr(self, key, value)
        self.validate()
        return self

    def from_toml(self, data: str):
        """Convert output toml of this class back into usable data and save it to this class.

        Parameters:
            data: The toml config data to convert.
        """
        return self.from_dict(toml.loads(data))

    def from_yaml(self, data: str):
        """Convert output yaml of this class back into usable data and save it to this class.

        Parameters:
            data: The yaml config data to convert.
        """
        return self.from_dict(yaml.load(data, Loader=yaml.SafeLoader))

    def validate(self) -> None:
        pass


@dataclass
class ModelConfig(_ConfigBase):
    """Architectural hyperparameters.

    Attributes:
        stage_channels: Channel width of the four encoder stages (strides 4, 8, 16, 32).
        window: Side `M` of the local temporal attention windows.
        sr_ratios: Spatial-reduction ratio of the global temporal layer at stages 3 and 4.
        heads: Attention heads in every temporal transformer layer.
        clip_len: Frames per clip at inference.
        input_side: Square side frames are resized to; a multiple of 32.
        loss_lambda: Weight of the auxiliary losses.
        mtt_depth: Mixed temporal blocks per transformer stage.
        mlp_ratio: FFN expansion of transformer and decoder blocks.
        pos_encoding: Add a sinusoidal frame-index encoding before each mixed block.
        separate_streams: Give the motion stream its own encoder weights.
        use_bfm: Fuse streams with the bi-modal fusion module (summed otherwise).
        use_mtt: Run temporal transformers at stages 3 and 4 (identity otherwise).
        use_ctd: Decode with the cascaded decoder (a plain FPN otherwise).
        modality: `both`, `appearance` or `motion`; single modalities skip fusion.
        decoder_norm: `bn` or `ln` on the decoder's depth-wise path.
        se_ratio: Bottleneck ratio of the decoder's squeeze-excitation block.
        ca_ratio: Bottleneck ratio of the fusion channel attention.
        spatial_kernel: Kernel of the fusion spatial attention conv.
        backbone_depth: Depth-wise blocks per encoder stage.
    """

    stage_channels: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    window: int = 8
    sr_ratios: List[int] = field(default_factory=lambda: [4, 2])
    heads: int = 4
    clip_len: int = 12
    input_side: int = 512
    loss_lambda: float = 0.5
    mtt_depth: int = 1
    mlp_ratio: int = 4
    pos_encoding: bool = False
    separate_streams: bool = False
    use_bfm: bool = True
    use_mtt: bool = True
    use_ctd: bool = True
    modality: Literal["both", "appearance", "motion"] = "both"
    decoder_norm: Literal["bn", "ln"] = "bn"
    se_ratio: int = 4
    ca_ratio: int = 4
    spatial_kernel: int = 7
    backbone_depth: int = 2

    def validate(self) -> None:
        if len(self.stage_channels) != 4 or min(self.stage_channels) < 1:
            raise ConfigError(f"stage_channels needs four positive widths, got {self.stage_channels}")
        if len(self.sr_ratios) != 2 or min(self.sr_ratios) < 1:
            raise ConfigError(f"sr_ratios needs two positive ratios, got {self.sr_ratios}")
        if self.input_side < 32 or self.input_side % 32:
            raise ConfigError(f"input_side must be a positive multiple of 32, got {self.input_side}")
        if self.window < 1 or self.clip_len < 1 or self.heads < 1 or self.mtt_depth < 1:
            raise ConfigError("window, clip_len, heads and mtt_depth must be >= 1")
        for width in self.stage_channels[2:]:
            if width % self.heads:
                raise ConfigError(f"heads={self.heads} does not divide stage width {width}")
        for ratio, stride in zip(self.sr_ratios, (16, 32)):
            if (self.input_side // stride) % ratio:
                raise ConfigError(f"sr ratio {ratio} does not divide the stride-{stride} map of side {self.input_side}")
        if any(width % 2 for width in self.stage_channels):
            raise ConfigError("stage widths must be even for the fusion gate split")
        if self.modality not in ("both", "appearance", "motion"):
            raise ConfigError(f"unknown modality: {self.modality}")
        if self.decoder_norm not in ("bn", "ln"):
            raise ConfigError(f"unknown decoder_norm: {self.decoder_norm}")
        if self.loss_lambda < 0:
            raise ConfigError("loss_lambda must be non-negative")

    def stage_side(self, stage: int) -> int:
        """Spatial side of stage `stage` (1-based) at the configured input side."""
        return self.input_side // (4 * 2 ** (stage - 1))


@dataclass
class TrainConfig(_ConfigBase):
    """Optimizer, schedule and synthetic-task settings.

    Attributes:
        steps: Optimizer steps.
        lr: AdamW learning rate.
        betas: AdamW moment decay rates.
        weight_decay: Decoupled weight decay.
        eps: AdamW denominator epsilon.
        seed: Seeds weight init and clip sampling.
        train_clip_len: Frames per training clip.
        reverse_prob: Probability of reversing a training clip's frame order.
        canvas: Side of the synthetic frames.
        object_shape: `square` or `disc`.
        object_size: Side (or diameter) of the synthetic object in pixels.
        trajectory: `linear` or `sinusoidal`.
        velocity: Object speed in pixels per frame.
        distractors: Static distractor shapes per clip.
        noise: Gaussian pixel noise sigma, in [0, 1] intensity units.
        log_every: Log the loss every this many steps.
    """

    steps: int = 2000
    lr: float = 3e-4
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    eps: float = 1e-8
    seed: int = 0
    train_clip_len: int = 3
    reverse_prob: float = 0.5
    canvas: int = 64
    object_shape: Literal["square", "disc"] = "square"
    object_size: int = 16
    trajectory: Literal["linear", "sinusoidal"] = "linear"
    velocity: float = 2.0
    distractors: int = 1
    noise: float = 0.02
    log_every: int = 50

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if not 0 <= self.reverse_prob <= 1:
            raise ConfigError("reverse_prob must be in [0, 1]")
        if self.train_clip_len < 1:
            raise ConfigError("train_clip_len must be >= 1")
        if self.object_shape not in ("square", "disc"):
            raise ConfigError(f"unknown object_shape: {self.object_shape}")
        if self.trajectory not in ("linear", "sinusoidal"):
            raise ConfigError(f"unknown trajectory: {self.trajectory}")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")


def split_config(data: dict) -> Tuple[ModelConfig, TrainConfig]:
    """Split one flat dict of settings into model and training configs."""
    model_keys, train_keys = set(ModelConfig.keys()), set(TrainConfig.keys())
    unknown = sorted(set(data) - model_keys - train_keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    model = ModelConfig().from_dict({k: v for k, v in data.items() if k in model_keys})
    train = TrainConfig().from_dict({k: v for k, v in data.items() if k in train_keys})
    return model, train


def load_config(path: Union[str, Path, None] = None) -> Tuple[ModelConfig, TrainConfig]:
    """Read a flat `key = value` toml file into `(ModelConfig, TrainConfig)`.

    Parameters:
        path: The file to read; `None` gives the defaults.
    """
    if path is None:
        return ModelConfig(), TrainConfig()
    try:
        data = toml.loads(Path(path).read_text())
    except (OSError, toml.TomlDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return split_config(data)


def dump_config(model: ModelConfig, train: TrainConfig = None) -> str:
    """Flat toml holding both configs, readable by `load_config`."""
    data = model.as_dict()
    if train is not None:
        data.update(train.as_dict())
    return toml.dumps(data)


__all__ = ["ModelConfig", "TrainConfig", "dump_config", "load_config", "split_config"]
