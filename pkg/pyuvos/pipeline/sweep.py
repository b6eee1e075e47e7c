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

"""J&F as a function of the inference clip length."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Sequence

from pyuvos.config import ModelConfig
from pyuvos.data import SequenceMetrics
from pyuvos.data.io import VideoSequence, read_mask
from pyuvos.errors import ConfigError, DataError
from pyuvos.metrics import score_sequence
from pyuvos.models import MTNet
from pyuvos.pipeline.infer import infer

DEFAULT_CLIP_LEN = ModelConfig().clip_len


@dataclass
class SweepRow:
    clip_len: int
    metrics: SequenceMetrics

    def as_csv(self) -> str:
        m = self.metrics
        return f"{self.clip_len},{m.jf_mean},{m.j_mean},{m.f_mean},{m.frames}"


@dataclass
class ClipLengthSweep:
    """One aggregate row per clip length, sorted by clip length."""

    rows: List[SweepRow] = field(default_factory=list)

    CSV_HEADER = "clip_len,jf_mean,j_mean,f_mean,frames"

    def __getitem__(self, clip_len: int) -> SweepRow:
        for row in self.rows:
            if row.clip_len == clip_len:
                return row
        raise KeyError(f"{clip_len}")

    @property
    def clip_lengths(self) -> List[int]:
        return [row.clip_len for row in self.rows]

    def asdict(self) -> dict:
        return asdict(self)

    def as_csv(self) -> str:
        return "\n".join([self.CSV_HEADER] + [row.as_csv() for row in self.rows]) + "\n"


def sweep_values(values: Iterable[int], default: int = DEFAULT_CLIP_LEN) -> List[int]:
    """Deduplicated, sorted clip lengths, always including `default`."""
    values = set(int(v) for v in values)
    values.add(default)
    if min(values) < 1:
        raise ConfigError(f"clip lengths must be >= 1, got {sorted(values)}")
    return sorted(values)


def sweep_clip_length(
    sequences: Sequence[VideoSequence],
    model: MTNet,
    clip_lengths: Iterable[int],
    default: int = DEFAULT_CLIP_LEN,
) -> ClipLengthSweep:
    """Infer every sequence at each clip length and score it against its ground truth.

    Ground truth is read once; every row is the mean over sequences.
    """
    truth = {}
    for sequence in sequences:
        if not sequence.masks:
            raise DataError(f"{sequence.name}: the clip-length sweep needs ground truth")
        truth[sequence.name] = [read_mask(p) > 127 for p in sequence.masks]

    sweep = ClipLengthSweep()
    for clip_len in sweep_values(clip_lengths, default):
        rows = []
        for sequence in sequences:
            prediction = infer(sequence, model, clip_len)
            rows.append(score_sequence(sequence.name, prediction.probabilities, truth[sequence.name]))
        aggregate = SequenceMetrics.mean(rows, name=f"T={clip_len}")
        logging.info(f"clip length {clip_len}: J&F {aggregate.jf_mean:.4f}")
        sweep.rows.append(SweepRow(clip_len, aggregate))
    return sweep
