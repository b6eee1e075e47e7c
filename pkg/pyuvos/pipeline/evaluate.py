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
from typing import List, Literal, Tuple, Union

import numpy as np

from pyuvos.data import MetricReport, SequenceMetrics
from pyuvos.data.io import list_images, read_mask
from pyuvos.errors import ConfigError, DataError
from pyuvos.metrics import score_sequence
from pyuvos.settings import PyuvosSettings

PathLike = Union[str, Path]

# which sub-directory of a prediction directory each mode reads
MODE_SUBDIRS = {"uvos": "masks", "vsod": "saliency"}


def _pairs(pred_dir: Path, gt_dir: Path, mode: str) -> List[Tuple[Path, Path]]:
    subdir = pred_dir / MODE_SUBDIRS[mode]
    if subdir.is_dir():
        pred_dir = subdir
    gts = list_images(gt_dir)
    if not gts:
        logging.warning(f"no ground truth in {gt_dir}")
        raise DataError(f"no ground-truth masks in {gt_dir}")
    preds = {p.stem: p for p in list_images(pred_dir)} if pred_dir.is_dir() else {}
    missing = [g.stem for g in gts if g.stem not in preds]
    if missing:
        logging.warning(f"{pred_dir}: no prediction for {len(missing)} frames, first {missing[0]}")
        raise DataError(f"{pred_dir} has no prediction for {', '.join(missing[:5])}")
    return [(preds[g.stem], g) for g in gts]


def load_sequence(
    name: str, pred_dir: PathLike, gt_dir: PathLike, mode: str
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Read matching prediction and ground-truth frames as `[0, 1]` maps and boolean masks."""
    saliency, gts = [], []
    for pred_path, gt_path in _pairs(Path(pred_dir), Path(gt_dir), mode):
        pred, gt = read_mask(pred_path), read_mask(gt_path)
        if pred.shape != gt.shape:
            logging.warning(f"{name}: {pred_path.name} is {pred.shape}, ground truth is {gt.shape}")
            raise DataError(f"{pred_path} is {pred.shape[1]}x{pred.shape[0]}, ground truth {gt.shape[1]}x{gt.shape[0]}")
        if mode == "uvos":
            saliency.append((pred > 127).astype(np.float64))
        else:
            saliency.append(pred.astype(np.float64) / 255.0)
        gts.append(gt > 127)
    return saliency, gts


def evaluate_sequence(name: str, pred_dir: PathLike, gt_dir: PathLike, mode: str) -> SequenceMetrics:
    saliency, gts = load_sequence(name, pred_dir, gt_dir, mode)
    return score_sequence(name, saliency, gts)


async def _evaluate_all(jobs: List[Tuple[str, Path, Path]], mode: str) -> List[SequenceMetrics]:
    rows = []
    tasks = []
    for name, pred, gt in jobs:
        if len(tasks) >= PyuvosSettings().eval_workers:
            rows.extend(await asyncio.gather(*tasks))
            tasks = []
        tasks.append(asyncio.to_thread(evaluate_sequence, name, pred, gt, mode))
    rows.extend(await asyncio.gather(*tasks))
    return rows


def evaluate(pred_dir: PathLike, gt_dir: PathLike, mode: Literal["uvos", "vsod"] = "uvos") -> MetricReport:
    """Score predictions against ground truth.

    `gt_dir` either holds one sequence's masks, or one sub-directory per sequence
    with predictions in the same-named sub-directory of `pred_dir`. In each
    prediction directory a `masks/` (uvos) or `saliency/` (vsod) sub-directory is
    used when present. uvos reads predictions as binary (> 127), vsod as soft
    maps (/ 255).

    Parameters:
        pred_dir: Prediction images, named like the ground truth.
        gt_dir: Ground-truth masks, foreground 255.
        mode: `uvos` or `vsod`.
    """
    if mode not in MODE_SUBDIRS:
        raise ConfigError(f"unknown evaluation mode {mode!r}, expected uvos or vsod")
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not gt_dir.is_dir():
        raise DataError(f"{gt_dir} is not a directory")
    if list_images(gt_dir):
        jobs = [(gt_dir.name, pred_dir, gt_dir)]
    else:
        names = sorted(p.name for p in gt_dir.iterdir() if p.is_dir())
        if not names:
            logging.warning(f"{gt_dir} holds no masks and no sequence directories")
            raise DataError(f"no ground truth in {gt_dir}")
        jobs = [(name, pred_dir / name, gt_dir / name) for name in names]
    rows = asyncio.run(_evaluate_all(jobs, mode))
    report = MetricReport(mode=mode, sequences=rows)
    logging.info(f"{mode}: {len(rows)} sequences, J&F {report.aggregate.jf_mean:.4f}, MAE {report.aggregate.mae:.4f}")
    return report
