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

"""Optical flow to RGB, Middlebury colour-wheel encoding.

Hue follows the flow direction, saturation the magnitude relative to the
largest magnitude in the field; zero motion is white.
"""

from pathlib import Path
from typing import Union

import cv2
import numpy as np

from pyuvos.errors import DataError

# segment lengths of the wheel: red-yellow, yellow-green, green-cyan, cyan-blue, blue-magenta, magenta-red
WHEEL_SEGMENTS = (15, 6, 4, 11, 13, 6)


def make_color_wheel() -> np.ndarray:
    """The `[55, 3]` RGB wheel table."""
    ry, yg, gc, cb, bm, mr = WHEEL_SEGMENTS
    wheel = np.zeros((sum(WHEEL_SEGMENTS), 3))
    col = 0
    wheel[0:ry, 0] = 255
    wheel[0:ry, 1] = np.floor(255 * np.arange(0, ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(0, yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(0, gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(0, cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(0, bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(0, mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel


def wheel_position(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Fractional wheel index in `[0, 54]` for each direction."""
    ncols = sum(WHEEL_SEGMENTS)
    angle = np.arctan2(-v, -u) / np.pi
    return (angle + 1) / 2 * (ncols - 1)


def encode_flow(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Encode a flow field as an `[H, W, 3]` `uint8` RGB image."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise DataError(f"flow components must be matching 2-D fields, got {u.shape} and {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DataError("flow field contains non-finite values")
    rad = np.sqrt(u**2 + v**2)
    max_rad = rad.max() if rad.size else 0.0
    if max_rad > 0:
        u, v, rad = u / max_rad, v / max_rad, rad / max_rad

    wheel = make_color_wheel()
    ncols = wheel.shape[0]
    fk = wheel_position(u, v)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = fk - k0

    img = np.zeros(u.shape + (3,), dtype=np.uint8)
    for i in range(3):
        col = (1 - f) * wheel[k0, i] / 255.0 + f * wheel[k1, i] / 255.0
        col = 1 - rad * (1 - col)
        img[:, :, i] = np.floor(255 * col + 1e-9).astype(np.uint8)
    return img


def write_flow_png(path: Union[str, Path], u: np.ndarray, v: np.ndarray) -> None:
    if not cv2.imwrite(str(path), cv2.cvtColor(encode_flow(u, v), cv2.COLOR_RGB2BGR)):
        raise DataError(f"cannot write {path}")
