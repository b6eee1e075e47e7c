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
from typing import Sequence

import numpy as np

from pyuvos.data import SequenceMetrics
from pyuvos.errors import MetricError
from pyuvos.metrics.region import (
    BOUNDARY_TOLERANCE,
    DECAY_BINS,
    boundary_f,
    boundary_map,
    decay_bins,
    jaccard,
    recall_decay,
)
from pyuvos.metrics.saliency import (
    BETA_SQUARED,
    N_THRESHOLDS,
    e_measure_curve,
    e_measure_max,
    f_beta_curve,
    f_beta_max,
    mae,
    s_measure,
    thresholds,
)


def score_sequence(
    name: str, saliency: Sequence[np.ndarray], gts: Sequence[np.ndarray], n_thresholds: int = N_THRESHOLDS
) -> SequenceMetrics:
    """Score one sequence of `[0, 1]` maps against binary ground truth.

    J and F use the maps thresholded at 0.5 (ties are background). E and F-beta
    curves are averaged over frames before taking the maximum.
    """
    if len(saliency) != len(gts):
        raise MetricError(f"{name}: {len(saliency)} predictions but {len(gts)} ground-truth frames")
    if len(gts) == 0:
        raise MetricError(f"{name}: nothing to score")
    j_values, f_values, s_values, mae_values = [], [], [], []
    e_curve = np.zeros(n_thresholds)
    f_curve = np.zeros(n_thresholds)
    for sal, gt in zip(saliency, gts):
        gt = np.asarray(gt) > 0
        mask = np.asarray(sal) > 0.5
        j_values.append(jaccard(mask, gt))
        f_values.append(boundary_f(mask, gt))
        s_values.append(s_measure(sal, gt))
        mae_values.append(mae(sal, gt))
        e_curve += e_measure_curve(sal, gt, n_thresholds)
        f_curve += f_beta_curve(sal, gt, n_thresholds)

    metrics = SequenceMetrics(name=name, frames=len(gts))
    if len(gts) >= DECAY_BINS:
        metrics.j_mean, metrics.j_recall, metrics.j_decay = recall_decay(j_values)
        metrics.f_mean, metrics.f_recall, metrics.f_decay = recall_decay(f_values)
    else:
        logging.debug(f"{name}: {len(gts)} frames, decay not defined")
        metrics.j_mean, metrics.j_recall = float(np.mean(j_values)), float(np.mean(np.asarray(j_values) > 0.5))
        metrics.f_mean, metrics.f_recall = float(np.mean(f_values)), float(np.mean(np.asarray(f_values) > 0.5))
    metrics.jf_mean = (metrics.j_mean + metrics.f_mean) / 2
    metrics.s_measure = float(np.mean(s_values))
    metrics.e_measure_max = float((e_curve / len(gts)).max())
    metrics.f_beta_max = float((f_curve / len(gts)).max())
    metrics.mae = float(np.mean(mae_values))
    return metrics


__all__ = [
    "BETA_SQUARED",
    "BOUNDARY_TOLERANCE",
    "DECAY_BINS",
    "N_THRESHOLDS",
    "boundary_f",
    "boundary_map",
    "decay_bins",
    "e_measure_curve",
    "e_measure_max",
    "f_beta_curve",
    "f_beta_max",
    "jaccard",
    "mae",
    "recall_decay",
    "s_measure",
    "score_sequence",
    "thresholds",
]
