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

import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence

import numpy as np

from pyuvos.errors import DataError


@dataclass
class MaskSequence:
    """Per-frame predictions for one sequence.

    Attributes:
        probabilities: Soft foreground maps, `[N, H, W]` floats in [0, 1].
        masks: Binary masks, `[N, H, W]` `uint8` in {0, 1}.
        stems: File stem of each frame, when known.
    """

    probabilities: np.ndarray
    masks: np.ndarray
    stems: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.probabilities.shape != self.masks.shape:
            raise DataError(f"probabilities {self.probabilities.shape} and masks {self.masks.shape} differ")

    def __len__(self) -> int:
        return int(self.masks.shape[0])

    @classmethod
    def concat(cls, parts: Sequence["MaskSequence"], stems: Optional[List[str]] = None) -> "MaskSequence":
        """Join per-clip results in order."""
        return cls(
            probabilities=np.concatenate([p.probabilities for p in parts], axis=0),
            masks=np.concatenate([p.masks for p in parts], axis=0),
            stems=list(stems or [s for p in parts for s in p.stems]),
        )


@dataclass
class LossReport:
    """The multi-level loss of one step.

    Attributes:
        total: `main + loss_lambda * sum(aux)`.
        main: Loss of the level-1 prediction.
        aux: Losses of levels 2, 3 and 4.
        loss_lambda: Weight applied to the auxiliary losses.
    """

    total: float
    main: float
    aux: List[float]
    loss_lambda: float = 0.5

    CSV_HEADER = "step,total,main,aux2,aux3,aux4"

    def asdict(self) -> dict:
        return asdict(self)

    def as_json(self) -> str:
        return json.dumps(self.asdict())

    def as_csv(self, step: int) -> str:
        """One loss-curve row, matching `CSV_HEADER`."""
        values = [self.total, self.main] + list(self.aux)
        return ",".join([str(step)] + [repr(float(v)) for v in values])


@dataclass
class SequenceMetrics:
    """Scores of one sequence (or the mean over sequences).

    `*_decay` is `None` for sequences shorter than four frames.
    """

    name: str = ""
    frames: int = 0
    j_mean: float = 0.0
    j_recall: float = 0.0
    j_decay: Optional[float] = None
    f_mean: float = 0.0
    f_recall: float = 0.0
    f_decay: Optional[float] = None
    jf_mean: float = 0.0
    s_measure: float = 0.0
    e_measure_max: float = 0.0
    f_beta_max: float = 0.0
    mae: float = 0.0

    def __getitem__(self, item):
        try:
            return getattr(self, item)
        except AttributeError:
            raise KeyError(f"{item}")

    def __iter__(self):
        return iter([item.name for item in fields(self)])

    def asdict(self) -> dict:
        return asdict(self)

    def as_csv(self) -> str:
        return ",".join("" if self[key] is None else str(self[key]) for key in self)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(item.name for item in fields(cls))

    @classmethod
    def mean(cls, rows: Sequence["SequenceMetrics"], name: str = "mean") -> "SequenceMetrics":
        out = cls(name=name, frames=sum(r.frames for r in rows))
        for key in out:
            if key in ("name", "frames"):
                continue
            values = [r[key] for r in rows if r[key] is not None]
            setattr(out, key, float(np.mean(values)) if values else None)
        return out


@dataclass
class MetricReport:
    """Per-sequence scores plus their aggregate.

    Attributes:
        mode: `uvos` or `vsod`.
        sequences: One row per sequence, sorted by name.
        aggregate: The mean over sequences.
    """

    mode: str
    sequences: List[SequenceMetrics]
    aggregate: SequenceMetrics = None

    def __post_init__(self):
        if self.aggregate is None:
            self.aggregate = SequenceMetrics.mean(self.sequences)

    def asdict(self) -> dict:
        return asdict(self)

    def as_json(self) -> str:
        return json.dumps(self.asdict(), indent=2)

    def as_csv(self) -> str:
        """Header, one row per sequence, then the aggregate row."""
        lines = [SequenceMetrics.csv_header()]
        lines.extend(row.as_csv() for row in self.sequences)
        lines.append(self.aggregate.as_csv())
        return "\n".join(lines) + "\n"


__all__ = ["LossReport", "MaskSequence", "MetricReport", "SequenceMetrics"]
