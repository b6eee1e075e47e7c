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


from pyuvos.config import ModelConfig, TrainConfig, load_config

from pyuvos.data import LossReport, MaskSequence, MetricReport, SequenceMetrics
from pyuvos.data.io import VideoSequence, find_sequences
from pyuvos.data.synthetic import SyntheticClipSpec, make_clip

from pyuvos.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    MetricError,
    PyuvosError,
    ShapeError,
    TensorError,
    TrainingError,
)

from pyuvos.models import MODEL_VARIANTS, MTNet, get_model

from pyuvos.pipeline import evaluate, infer, load_model, plan_clips, sweep_clip_length

from pyuvos.settings import PyuvosSettings

from pyuvos.tensor import Tensor

from pyuvos.train import Trainer, train

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "load_config",
    "LossReport",
    "MaskSequence",
    "MetricReport",
    "SequenceMetrics",
    "VideoSequence",
    "find_sequences",
    "SyntheticClipSpec",
    "make_clip",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "MetricError",
    "PyuvosError",
    "ShapeError",
    "TensorError",
    "TrainingError",
    "MODEL_VARIANTS",
    "MTNet",
    "get_model",
    "evaluate",
    "infer",
    "load_model",
    "plan_clips",
    "sweep_clip_length",
    "PyuvosSettings",
    "Tensor",
    "Trainer",
    "train",
]
