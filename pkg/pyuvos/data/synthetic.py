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

"""Deterministic moving-object clips for training and tests.

One object moves over a static textured background with static distractor shapes.
Masks cover exactly the object; each flow image encodes the object's displacement
to the next frame (zero elsewhere), the last frame reusing its predecessor's flow.
"""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import cv2
import numpy as np
import toml

from pyuvos.data.flow import encode_flow
from pyuvos.data.io import write_image, write_mask
from pyuvos.errors import ConfigError, DataError

COMPASS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass
class SyntheticClipSpec:
    """Parameters of one synthetic clip.

    Attributes:
        seed: Drives start position, direction, colours, distractors and noise.
        canvas: Frame side in pixels.
        shape: `square` or `disc`.
        size: Square side or disc diameter.
        trajectory: `linear`, or `sinusoidal` (linear along the direction plus a
            vertical sine of `amplitude` pixels and `period` frames).
        velocity: Pixels per frame along each moving axis.
        distractors: Static shapes that are not part of the mask.
        noise: Gaussian pixel noise sigma, as a fraction of full scale.
        amplitude: Sine amplitude of the sinusoidal trajectory.
        period: Sine period, in frames.
        start: Optional fixed top-left corner `(x, y)`; random when omitted.
    """

    seed: int = 0
    canvas: int = 64
    shape: Literal["square", "disc"] = "square"
    size: int = 16
    trajectory: Literal["linear", "sinusoidal"] = "linear"
    velocity: float = 2.0
    distractors: int = 1
    noise: float = 0.02
    amplitude: float = 4.0
    period: float = 8.0
    start: Optional[Tuple[int, int]] = None

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticClipSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown synthetic clip keys: {', '.join(unknown)}")
        data = dict(data)
        if data.get("start") is not None:
            data["start"] = tuple(int(v) for v in data["start"])
        return cls(**data)

    def as_toml(self) -> str:
        data = {k: v for k, v in asdict(self).items() if v is not None}
        if "start" in data:
            data["start"] = list(data["start"])
        return toml.dumps(data)


@dataclass
class SyntheticClip:
    """`frames`/`flows` `[T, H, W, 3]` uint8 RGB, `masks` `[T, H, W]` uint8 {0, 1},
    `displacements` the integer `(dx, dy)` from each frame to the next."""

    frames: np.ndarray
    flows: np.ndarray
    masks: np.ndarray
    displacements: List[Tuple[int, int]]

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def reversed(self) -> "SyntheticClip":
        """The clip played backwards, with flows re-rendered for the reversed motion."""
        frames, masks = self.frames[::-1].copy(), self.masks[::-1].copy()
        steps = [(-dx, -dy) for dx, dy in reversed(self.displacements)]
        return SyntheticClip(frames, _render_flows(masks, steps), masks, steps)


def _trajectory(spec: SyntheticClipSpec, frames: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    sx, sy = COMPASS[int(rng.integers(len(COMPASS)))]
    offsets = []
    for t in range(frames):
        ox = t * spec.velocity * sx
        oy = t * spec.velocity * sy
        if spec.trajectory == "sinusoidal":
            oy += spec.amplitude * np.sin(2 * np.pi * t / spec.period)
        offsets.append((int(round(ox)), int(round(oy))))
    limit = spec.canvas - spec.size
    lo_x, hi_x = -min(o[0] for o in offsets), limit - max(o[0] for o in offsets)
    lo_y, hi_y = -min(o[1] for o in offsets), limit - max(o[1] for o in offsets)
    if spec.start is not None:
        x0, y0 = spec.start
        if not (lo_x <= x0 <= hi_x and lo_y <= y0 <= hi_y):
            raise DataError(f"object starting at {spec.start} leaves the {spec.canvas}px canvas within {frames} frames")
    else:
        if lo_x > hi_x or lo_y > hi_y:
            raise DataError(
                f"a {spec.size}px object at {spec.velocity}px/frame cannot stay in a {spec.canvas}px canvas for {frames} frames"
            )
        x0, y0 = int(rng.integers(lo_x, hi_x + 1)), int(rng.integers(lo_y, hi_y + 1))
    return [(x0 + ox, y0 + oy) for ox, oy in offsets]


def _draw(canvas: np.ndarray, shape: str, x: int, y: int, size: int, color) -> None:
    if shape == "square":
        cv2.rectangle(canvas, (x, y), (x + size - 1, y + size - 1), color, thickness=-1)
    else:
        # diameter 2r + 1 stays inside the size x size box
        r = (size - 1) // 2
        cv2.circle(canvas, (x + r, y + r), r, color, thickness=-1)


def _render_flows(masks: np.ndarray, steps: List[Tuple[int, int]]) -> np.ndarray:
    frames, h, w = masks.shape
    if frames == 1:
        return encode_flow(np.zeros((h, w)), np.zeros((h, w)))[None]
    flows = []
    for t in range(frames - 1):
        dx, dy = steps[t]
        u = masks[t].astype(np.float64) * dx
        v = masks[t].astype(np.float64) * dy
        flows.append(encode_flow(u, v))
    flows.append(flows[-1])
    return np.stack(flows)


def make_clip(spec: SyntheticClipSpec, frames: int) -> SyntheticClip:
    """Render `frames` frames of `spec`; identical specs give identical clips."""
    if frames < 1:
        raise DataError("a clip needs at least one frame")
    if spec.shape not in ("square", "disc") or spec.trajectory not in ("linear", "sinusoidal"):
        raise ConfigError(f"unsupported clip spec {spec.shape}/{spec.trajectory}")
    rng = np.random.default_rng(spec.seed)
    positions = _trajectory(spec, frames, rng)

    n = spec.canvas
    yy, xx = np.mgrid[0:n, 0:n] / max(n - 1, 1)
    tint = rng.uniform(60, 140, size=3)
    background = np.stack([tint[c] + 40 * (xx if c % 2 else yy) for c in range(3)], axis=-1)
    for _ in range(spec.distractors):
        dx, dy = (int(v) for v in rng.integers(0, n - spec.size + 1, size=2))
        _draw(background, spec.shape, dx, dy, spec.size, tuple(float(c) for c in rng.uniform(0, 255, size=3)))
    color = tuple(float(c) for c in rng.uniform(150, 255, size=3))

    images, masks = [], []
    for x, y in positions:
        mask = np.zeros((n, n), dtype=np.uint8)
        _draw(mask, spec.shape, x, y, spec.size, 1)
        image = background.copy()
        image[mask > 0] = color
        image += rng.normal(0.0, spec.noise * 255, size=image.shape)
        images.append(np.clip(np.rint(image), 0, 255).astype(np.uint8))
        masks.append(mask)
    masks = np.stack(masks)
    steps = [(positions[t + 1][0] - positions[t][0], positions[t + 1][1] - positions[t][1]) for t in range(frames - 1)]
    logging.debug(f"synthetic clip seed={spec.seed}: start {positions[0]}, steps {steps}")
    return SyntheticClip(np.stack(images), _render_flows(masks, steps), masks, steps)


def write_clip(clip: SyntheticClip, out_dir: Union[str, Path]) -> None:
    """Write `frames/`, `flows/` and `masks/` PNGs named `00000.png`, `00001.png`, ..."""
    out_dir = Path(out_dir)
    for t in range(len(clip)):
        name = f"{t:05d}.png"
        write_image(out_dir / "frames" / name, clip.frames[t])
        write_image(out_dir / "flows" / name, clip.flows[t])
        write_mask(out_dir / "masks" / name, clip.masks[t])
