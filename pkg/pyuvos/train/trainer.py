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
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np

from pyuvos.config import ModelConfig, TrainConfig, dump_config
from pyuvos.data import LossReport, SequenceMetrics
from pyuvos.data.io import images_to_tensor
from pyuvos.data.synthetic import SyntheticClip, SyntheticClipSpec, make_clip
from pyuvos.errors import TrainingError
from pyuvos.metrics import score_sequence
from pyuvos.models import get_model
from pyuvos.pipeline.infer import config_sidecar, infer_arrays
from pyuvos.tensor import Tensor, save_checkpoint
from pyuvos.train.loss import bce_multilevel
from pyuvos.train.optim import AdamW

PathLike = Union[str, Path]

# held-out clips are drawn from seeds the sampler never produces
HELD_OUT_SEED = 2**31


class Trainer:
    """Trains a model variant on synthetic moving-object clips.

    Weights are initialised from `train_config.seed` and clips sampled from
    `seed + 1`, so a run is fully determined by its two configs.

    Parameters:
        model_config: Architecture.
        train_config: Optimizer, schedule and synthetic-task settings.
        variant: A key of `MODEL_VARIANTS`.
    """

    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, variant: str = "MTNet"):
        train_config.validate()
        self.train_config = train_config
        self.model = get_model(model_config, variant, seed=train_config.seed).train()
        self.optimizer = AdamW(
            self.model.parameters(),
            lr=train_config.lr,
            betas=train_config.betas,
            weight_decay=train_config.weight_decay,
            eps=train_config.eps,
        )
        self.rng = np.random.default_rng(train_config.seed + 1)
        self.history: List[LossReport] = []

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    def clip_spec(self, seed: int) -> SyntheticClipSpec:
        c = self.train_config
        return SyntheticClipSpec(
            seed=seed,
            canvas=c.canvas,
            shape=c.object_shape,
            size=c.object_size,
            trajectory=c.trajectory,
            velocity=c.velocity,
            distractors=c.distractors,
            noise=c.noise,
        )

    def to_batch(self, clip: SyntheticClip) -> Tuple[Tensor, Tensor, np.ndarray]:
        """Model inputs and a `[T, 1, side, side]` target for one clip."""
        side = self.config.input_side
        masks = clip.masks
        if masks.shape[1:] != (side, side):
            masks = np.stack([cv2.resize(m, (side, side), interpolation=cv2.INTER_NEAREST) for m in masks])
        return images_to_tensor(clip.frames, side), images_to_tensor(clip.flows, side), masks[:, None]

    def sample(self) -> SyntheticClip:
        """The next training clip, reversed with probability `reverse_prob`."""
        seed = int(self.rng.integers(HELD_OUT_SEED))
        reverse = bool(self.rng.random() < self.train_config.reverse_prob)
        clip = make_clip(self.clip_spec(seed), self.train_config.train_clip_len)
        return clip.reversed() if reverse else clip

    def train_step(self) -> LossReport:
        frames, flows, target = self.to_batch(self.sample())
        self.optimizer.zero_grad()
        logits = self.model(frames, flows)
        total, report = bce_multilevel(logits, target, self.config.loss_lambda)
        if not np.isfinite(report.total):
            raise TrainingError(
                f"loss diverged at step {len(self.history)}: total={report.total} main={report.main} aux={report.aux}"
            )
        total.backward()
        self.optimizer.step()
        self.history.append(report)
        return report

    def fit(self, steps: Optional[int] = None, curve: Optional[PathLike] = None) -> List[LossReport]:
        """Run `steps` optimizer steps (default `train_config.steps`).

        Parameters:
            curve: Optional CSV file receiving one `step,total,main,aux2,aux3,aux4` row per step.
        """
        steps = self.train_config.steps if steps is None else steps
        rows = [LossReport.CSV_HEADER]
        reports = []
        for _ in range(steps):
            step = len(self.history)
            report = self.train_step()
            reports.append(report)
            rows.append(report.as_csv(step))
            if step % self.train_config.log_every == 0:
                logging.info(f"step {step}: loss {report.total:.5f} (main {report.main:.5f})")
        if curve is not None:
            curve = Path(curve)
            curve.parent.mkdir(parents=True, exist_ok=True)
            curve.write_text("\n".join(rows) + "\n")
        return reports

    def save(self, path: PathLike) -> None:
        """Write the checkpoint and its `<path>.toml` config sidecar."""
        save_checkpoint(path, self.model.state_dict())
        config_sidecar(path).write_text(dump_config(self.config, self.train_config))
        logging.info(f"saved {path} after {len(self.history)} steps")

    def validate(self, frames: int = 12, clip_len: Optional[int] = None, seed: int = HELD_OUT_SEED) -> SequenceMetrics:
        """Score the model on a held-out clip from the training generator."""
        clip = make_clip(self.clip_spec(seed), frames)
        self.model.eval()
        try:
            prediction = infer_arrays(
                self.model, clip.frames, clip.flows, clip_len or self.train_config.train_clip_len
            )
        finally:
            self.model.train()
        metrics = score_sequence("held-out", prediction.probabilities, clip.masks)
        logging.info(f"held-out clip: J {metrics.j_mean:.4f}, F {metrics.f_mean:.4f}, J&F {metrics.jf_mean:.4f}")
        return metrics


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    out: PathLike,
    steps: Optional[int] = None,
    variant: str = "MTNet",
    curve: Optional[PathLike] = None,
) -> Trainer:
    """Train, write `out`, `out.toml` and the loss curve (default `<out>.csv`)."""
    trainer = Trainer(model_config, train_config, variant)
    trainer.fit(steps, curve if curve is not None else Path(f"{out}.csv"))
    trainer.save(out)
    return trainer
