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
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from pyuvos.errors import DataError
from pyuvos.tensor import Tensor

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".jpg", ".jpeg", ".bmp")

PathLike = Union[str, Path]


def list_images(directory: PathLike) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def read_image(path: PathLike) -> np.ndarray:
    """Read an 8-bit colour image as `[H, W, 3]` RGB."""
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise DataError(f"cannot read image {path}")
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def read_mask(path: PathLike) -> np.ndarray:
    """Read a single-channel 8-bit map as `[H, W]` `uint8`."""
    image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if image is None:
        raise DataError(f"cannot read mask {path}")
    return image


def write_image(path: PathLike, rgb: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise DataError(f"cannot write {path}")


def write_mask(path: PathLike, mask: np.ndarray) -> None:
    """Write a {0, 1} mask as a 0/255 single-channel image."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), (np.asarray(mask) > 0).astype(np.uint8) * 255):
        raise DataError(f"cannot write {path}")


def write_saliency(path: PathLike, probabilities: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.clip(np.rint(np.asarray(probabilities, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    if not cv2.imwrite(str(path), values):
        raise DataError(f"cannot write {path}")


def images_to_tensor(images: Sequence[np.ndarray], side: Optional[int] = None) -> Tensor:
    """Stack `[H, W, 3]` uint8 images into a `[T, 3, side, side]` tensor scaled to [0, 1].

    Images are resized (bilinear, aspect ratio not kept) when `side` is given.
    """
    planes = []
    for image in images:
        if side is not None and image.shape[:2] != (side, side):
            image = cv2.resize(image, (side, side), interpolation=cv2.INTER_LINEAR)
        planes.append(image.astype(np.float32).transpose(2, 0, 1) / 255.0)
    return Tensor(np.stack(planes, axis=0))


@dataclass
class VideoSequence:
    """Frame, flow and optional ground-truth paths of one sequence.

    Attributes:
        name: Sequence name (the directory name).
        frames: Frame image paths in temporal order.
        flows: One flow image per frame; the last frame reuses its predecessor's flow.
        masks: Ground-truth mask paths, empty when there is no ground truth.
        size: Decoded `(height, width)` of the frames.
    """

    name: str
    frames: List[Path]
    flows: List[Path]
    masks: List[Path] = field(default_factory=list)
    size: Tuple[int, int] = (0, 0)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def stems(self) -> List[str]:
        return [p.stem for p in self.frames]

    @classmethod
    def from_dirs(
        cls,
        frames_dir: PathLike,
        flows_dir: PathLike,
        gt_dir: Optional[PathLike] = None,
        name: Optional[str] = None,
    ) -> "VideoSequence":
        frames = list_images(frames_dir)
        if not frames:
            raise DataError(f"no frames in {frames_dir}")
        flows = list_images(flows_dir)
        if len(flows) == len(frames) - 1 and flows:
            logging.debug(f"{frames_dir}: duplicating the last flow for the final frame")
            flows.append(flows[-1])
        if len(flows) != len(frames):
            raise DataError(f"{len(frames)} frames but {len(flows)} flows in {flows_dir}")
        masks = list_images(gt_dir) if gt_dir is not None else []
        if gt_dir is not None and len(masks) != len(frames):
            raise DataError(f"{len(frames)} frames but {len(masks)} ground-truth masks in {gt_dir}")
        size = read_image(frames[0]).shape[:2]
        return cls(name or Path(frames_dir).name, frames, flows, masks, size)

    def load_clip(self, start: int, stop: int, side: int) -> Tuple[Tensor, Tensor]:
        """Frames and flows `[start, stop)` as model input at `side x side`."""
        frames = [read_image(p) for p in self.frames[start:stop]]
        flows = [read_image(p) for p in self.flows[start:stop]]
        for path, image in zip(self.frames[start:stop] + self.flows[start:stop], frames + flows):
            if image.shape[:2] != tuple(self.size):
                raise DataError(f"{path} is {image.shape[1]}x{image.shape[0]}, expected {self.size[1]}x{self.size[0]}")
        return images_to_tensor(frames, side), images_to_tensor(flows, side)


def find_sequences(
    frames_dir: PathLike, flows_dir: PathLike, gt_dir: Optional[PathLike] = None
) -> List[VideoSequence]:
    """One sequence if `frames_dir` holds images, else one per sub-directory (sorted)."""
    frames_dir, flows_dir = Path(frames_dir), Path(flows_dir)
    if list_images(frames_dir):
        return [VideoSequence.from_dirs(frames_dir, flows_dir, gt_dir)]
    names = sorted(p.name for p in frames_dir.iterdir() if p.is_dir())
    if not names:
        raise DataError(f"no frames or sequence directories in {frames_dir}")
    return [
        VideoSequence.from_dirs(
            frames_dir / name, flows_dir / name, Path(gt_dir) / name if gt_dir is not None else None, name
        )
        for name in names
    ]
