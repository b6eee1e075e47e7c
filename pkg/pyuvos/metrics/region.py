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

"""Region (J) and boundary (F) measures with their mean/recall/decay summary."""

import math
from typing import Optional, Sequence, Tuple

import cv2
import numpy as np

from pyuvos.errors import MetricError

BOUNDARY_TOLERANCE = 0.008
DECAY_BINS = 4


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred.astype(bool), gt.astype(bool)


def jaccard(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; two empty masks score 1."""
    pred, gt = _check_pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary_map(mask: np.ndarray) -> np.ndarray:
    """Pixels whose value differs from their east, south or south-east neighbour."""
    seg = np.asarray(mask).astype(bool)
    east = np.zeros_like(seg)
    south = np.zeros_like(seg)
    south_east = np.zeros_like(seg)
    east[:, :-1] = seg[:, 1:]
    south[:-1, :] = seg[1:, :]
    south_east[:-1, :-1] = seg[1:, 1:]
    boundary = (seg ^ east) | (seg ^ south) | (seg ^ south_east)
    boundary[-1, :] = seg[-1, :] ^ east[-1, :]
    boundary[:, -1] = seg[:, -1] ^ south[:, -1]
    boundary[-1, -1] = False
    return boundary


def _dilate(boundary: np.ndarray, radius: int) -> np.ndarray:
    disk = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * radius + 1, 2 * radius + 1))
    return cv2.dilate(boundary.astype(np.uint8), disk) > 0


def boundary_f(pred: np.ndarray, gt: np.ndarray, tolerance: Optional[float] = None) -> float:
    """Boundary F-score with matches counted within a dilation radius.

    Parameters:
        tolerance: Match radius in pixels; defaults to `ceil(0.008 * image diagonal)`.
    """
    pred, gt = _check_pair(pred, gt)
    if tolerance is None:
        tolerance = BOUNDARY_TOLERANCE * math.hypot(*gt.shape)
    radius = max(1, int(math.ceil(tolerance)))
    pred_b, gt_b = boundary_map(pred), boundary_map(gt)
    n_pred, n_gt = np.count_nonzero(pred_b), np.count_nonzero(gt_b)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = np.count_nonzero(pred_b & _dilate(gt_b, radius)) / n_pred
    recall = np.count_nonzero(gt_b & _dilate(pred_b, radius)) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def decay_bins(frames: int) -> Sequence[Tuple[int, int]]:
    """Inclusive `(first, last)` frame index of each of the four temporal bins."""
    ids = np.round(np.linspace(1, frames, DECAY_BINS + 1) + 1e-10).astype(int) - 1
    return [(int(ids[i]), int(ids[i + 1])) for i in range(DECAY_BINS)]


def recall_decay(values: Sequence[float], threshold: float = 0.5) -> Tuple[float, float, float]:
    """`(mean, recall, decay)` of per-frame scores.

    Recall is the fraction of frames scoring above `threshold`; decay is the mean
    of the first temporal bin minus the mean of the last of four bins.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < DECAY_BINS:
        raise MetricError(f"decay needs at least {DECAY_BINS} frames, got {values.size}")
    bins = [values[a : b + 1] for a, b in decay_bins(values.size)]
    return float(values.mean()), float(np.mean(values > threshold)), float(bins[0].mean() - bins[-1].mean())
