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

import asyncio
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import cv2
import numpy as np

from pyuvos.config import ModelConfig, load_config
from pyuvos.data import MaskSequence
from pyuvos.data.io import VideoSequence, find_sequences, images_to_tensor, write_mask, write_saliency
from pyuvos.models import MTNet, binarize
from pyuvos.pipeline.clips import plan_clips
from pyuvos.settings import PyuvosSettings
from pyuvos.tensor import load_checkpoint

PathLike = Union[str, Path]


def config_sidecar(ckpt: PathLike) -> Path:
    """The config file written next to a checkpoint, `<ckpt>.toml`."""
    return Path(f"{ckpt}.toml")


def load_model(ckpt: PathLike, config: Optional[ModelConfig] = None) -> MTNet:
    """Build a model from a checkpoint, in eval mode.

    The architecture comes from `config` when given, else from the checkpoint's
    `<ckpt>.toml` sidecar, else the defaults. A checkpoint that does not fit the
    architecture raises `CheckpointError`.
    """
    if config is None:
        sidecar = config_sidecar(ckpt)
        if sidecar.is_file():
            logging.debug(f"{ckpt}: architecture from {sidecar}")
            config, _ = load_config(sidecar)
        else:
            config = ModelConfig()
    model = MTNet(config)
    model.load_state_dict(load_checkpoint(ckpt))
    return model.eval()


def _restore_size(probabilities: np.ndarray, height: int, width: int) -> np.ndarray:
    if probabilities.shape[1:] == (height, width):
        return probabilities
    resized = [cv2.resize(p, (width, height), interpolation=cv2.INTER_LINEAR) for p in probabilities]
    return np.clip(np.stack(resized), 0.0, 1.0)


def infer_arrays(
    model: MTNet,
    frames: np.ndarray,
    flows: np.ndarray,
    clip_len: Optional[int] = None,
    stems: Optional[List[str]] = None,
) -> MaskSequence:
    """Segment in-memory `[N, H, W, 3]` uint8 frames and flow images.

    The sequence is cut into clips of `clip_len` frames, each clip is resized to
    the model's input side, predicted, and its probabilities resized back to
    `H x W` before thresholding.
    """
    clip_len = clip_len or model.config.clip_len
    n, height, width = frames.shape[:3]
    plan = plan_clips(n, clip_len)
    logging.debug(f"{n} frames in {plan.count} clips of {clip_len}")
    side = model.config.input_side
    parts = []
    for start, stop in plan:
        clip_frames = images_to_tensor(frames[start:stop], side)
        clip_flows = images_to_tensor(flows[start:stop], side)
        probabilities = model.predict(clip_frames, clip_flows)
        parts.append(binarize(_restore_size(probabilities, height, width)))
    return MaskSequence.concat(parts, stems=stems or [f"{t:05d}" for t in range(n)])


def infer(sequence: VideoSequence, model: MTNet, clip_len: Optional[int] = None) -> MaskSequence:
    """Segment every frame of `sequence`; one mask per frame, in order, at the original size."""
    clip_len = clip_len or model.config.clip_len
    plan = plan_clips(len(sequence), clip_len)
    logging.debug(f"{sequence.name}: {len(sequence)} frames in {plan.count} clips of {clip_len}")
    height, width = sequence.size
    parts = []
    for start, stop in plan:
        clip_frames, clip_flows = sequence.load_clip(start, stop, model.config.input_side)
        probabilities = model.predict(clip_frames, clip_flows)
        parts.append(binarize(_restore_size(probabilities, height, width)))
    return MaskSequence.concat(parts, stems=sequence.stems)


async def infer_sequences(
    sequences: Sequence[VideoSequence], model: MTNet, clip_len: Optional[int] = None
) -> List[MaskSequence]:
    """Run `infer` over several sequences, `eval_workers` at a time; results keep input order."""
    results = []
    tasks = []
    for sequence in sequences:
        if len(tasks) >= PyuvosSettings().eval_workers:
            results.extend(await asyncio.gather(*tasks))
            tasks = []
        tasks.append(asyncio.to_thread(infer, sequence, model, clip_len))
    results.extend(await asyncio.gather(*tasks))
    return results


def write_predictions(prediction: MaskSequence, out_dir: PathLike) -> None:
    """Binary masks to `out_dir/masks/<stem>.png`, soft maps to `out_dir/saliency/<stem>.png`."""
    out_dir = Path(out_dir)
    for stem, mask, probabilities in zip(prediction.stems, prediction.masks, prediction.probabilities):
        write_mask(out_dir / "masks" / f"{stem}.png", mask)
        write_saliency(out_dir / "saliency" / f"{stem}.png", probabilities)


def run_inference(
    ckpt: PathLike,
    frames_dir: PathLike,
    flows_dir: PathLike,
    out_dir: PathLike,
    clip_len: Optional[int] = None,
    config: Optional[ModelConfig] = None,
) -> List[VideoSequence]:
    """Load a checkpoint, segment one sequence or a directory of sequences and write the results.

    A single sequence is written to `out_dir`, several to `out_dir/<name>`.
    """
    model = load_model(ckpt, config)
    sequences = find_sequences(frames_dir, flows_dir)
    predictions = asyncio.run(infer_sequences(sequences, model, clip_len))
    single = len(sequences) == 1 and Path(sequences[0].frames[0]).parent == Path(frames_dir)
    for sequence, prediction in zip(sequences, predictions):
        write_predictions(prediction, Path(out_dir) if single else Path(out_dir) / sequence.name)
        logging.info(f"{sequence.name}: wrote {len(prediction)} masks")
    return sequences
