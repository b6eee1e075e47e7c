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
from typing import Iterator, List, Tuple

from pyuvos.errors import ConfigError


@dataclass
class ClipPlan:
    """Disjoint, ordered `[start, stop)` clips covering `frames` frames.

    Attributes:
        frames: Sequence length N.
        clip_len: Target clip length T.
        bounds: Clip boundaries; every clip but the last has length T.
    """

    frames: int
    clip_len: int
    bounds: List[Tuple[int, int]]

    def __len__(self) -> int:
        return len(self.bounds)

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return iter(self.bounds)

    @property
    def count(self) -> int:
        return len(self.bounds)


def plan_clips(frames: int, clip_len: int) -> ClipPlan:
    """Split N frames into floor(N / T) clips of T frames plus a shorter remainder clip."""
    if frames < 1 or clip_len < 1:
        raise ConfigError(f"cannot plan clips for N={frames}, T={clip_len}")
    bounds = [(start, min(start + clip_len, frames)) for start in range(0, frames, clip_len)]
    return ClipPlan(frames, clip_len, bounds)
