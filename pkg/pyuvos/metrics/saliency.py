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

"""Saliency measures over `[0, 1]` maps: structure (S), enhanced alignment (E), F-beta, MAE.

Curves sweep `n` of the 256 levels `k / 255`, taken coarse to fine so that a longer sweep
always contains a shorter one, and binarise with `saliency >= threshold`.
"""

from typing import Tuple

import numpy as np

from pyuvos.errors import MetricError

_EPS = np.spacing(1)
N_THRESHOLDS = 256
BETA_SQUARED = 0.3
S_ALPHA = 0.5


def _prepare(saliency: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    saliency, gt = np.asarray(saliency, dtype=np.float64), np.asarray(gt)
    if saliency.shape != gt.shape:
        raise MetricError(f"saliency {saliency.shape} and ground truth {gt.shape} differ")
    if saliency.size and (saliency.min() < 0 or saliency.max() > 1 or not np.all(np.isfinite(saliency))):
        raise MetricError("saliency values must lie in [0, 1]")
    return saliency, gt > 0


def _coarse_to_fine(levels: int) -> np.ndarray:
    """Grid indices ordered by repeated bisection: both ends, then midpoints level by level."""
    order = [0, levels - 1]
    intervals = [(0, levels - 1)]
    while intervals:
        finer = []
        for lo, hi in intervals:
            if hi - lo > 1:
                mid = (lo + hi) // 2
                order.append(mid)
                finer += [(lo, mid), (mid, hi)]
        intervals = finer
    return np.array(order)


_LEVEL_ORDER = _coarse_to_fine(N_THRESHOLDS)


def thresholds(n: int = N_THRESHOLDS) -> np.ndarray:
    """Ascending sweep of `n` grid levels; `thresholds(n)` is a subset of `thresholds(n + 1)`."""
    if not 2 <= n <= N_THRESHOLDS:
        raise MetricError(f"a threshold sweep takes 2 to {N_THRESHOLDS} thresholds, got {n}")
    return np.sort(_LEVEL_ORDER[:n]) / (N_THRESHOLDS - 1)


def _count_at_least(values: np.ndarray, sweep: np.ndarray) -> np.ndarray:
    """For every threshold, how many of `values` are `>=` it."""
    ordered = np.sort(values.ravel())
    return ordered.size - np.searchsorted(ordered, sweep, side="left")


def mae(saliency: np.ndarray, gt: np.ndarray) -> float:
    saliency, gt = _prepare(saliency, gt)
    return float(np.mean(np.abs(saliency - gt)))


def f_beta_curve(saliency: np.ndarray, gt: np.ndarray, n: int = N_THRESHOLDS, beta_squared: float = BETA_SQUARED) -> np.ndarray:
    """F-beta of the thresholded map at each of `n` thresholds."""
    saliency, gt = _prepare(saliency, gt)
    sweep = thresholds(n)
    tp = _count_at_least(saliency[gt], sweep).astype(np.float64)
    predicted = _count_at_least(saliency, sweep).astype(np.float64)
    positives = np.count_nonzero(gt)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / positives if positives else np.zeros_like(tp)
    numerator = (1 + beta_squared) * precision * recall
    denominator = beta_squared * precision + recall
    return np.divide(numerator, denominator, out=np.zeros_like(tp), where=denominator > 0)


def f_beta_max(saliency: np.ndarray, gt: np.ndarray, n: int = N_THRESHOLDS) -> float:
    return float(f_beta_curve(saliency, gt, n).max())


def _enhanced_sum(fg_fg: np.ndarray, fg_bg: np.ndarray, bg_fg: np.ndarray, bg_bg: np.ndarray, mean_pred: np.ndarray, mean_gt: float) -> np.ndarray:
    """Sum of the enhanced alignment matrix, from the four pred/gt part sizes."""
    # (pred value, gt value, part size) for the four combinations
    parts = ((1, 1, fg_fg), (1, 0, fg_bg), (0, 1, bg_fg), (0, 0, bg_bg))
    total = np.zeros_like(mean_pred)
    for p, g, numel in parts:
        a = p - mean_pred
        b = g - mean_gt
        align = 2 * a * b / (a**2 + b**2 + _EPS)
        total += (align + 1) ** 2 / 4 * numel
    return total


def e_measure_curve(saliency: np.ndarray, gt: np.ndarray, n: int = N_THRESHOLDS) -> np.ndarray:
    """Enhanced-alignment measure at each threshold, normalised by the pixel count."""
    saliency, gt = _prepare(saliency, gt)
    sweep = thresholds(n)
    size = gt.size
    positives = np.count_nonzero(gt)
    fg_fg = _count_at_least(saliency[gt], sweep).astype(np.float64)
    predicted = _count_at_least(saliency, sweep).astype(np.float64)
    fg_bg = predicted - fg_fg
    bg_fg = positives - fg_fg
    bg_bg = size - positives - fg_bg
    if positives == 0:
        return bg_bg / size
    if positives == size:
        return fg_fg / size
    return _enhanced_sum(fg_fg, fg_bg, bg_fg, bg_bg, predicted / size, positives / size) / size


def e_measure_max(saliency: np.ndarray, gt: np.ndarray, n: int = N_THRESHOLDS) -> float:
    return float(e_measure_curve(saliency, gt, n).max())


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2 * x / (x * x + 1 + sigma + _EPS)


def _object(saliency: np.ndarray, gt: np.ndarray) -> float:
    ratio = gt.mean()
    fg_score = _object_score(saliency[gt])
    bg_score = _object_score(1 - saliency[~gt])
    return ratio * fg_score + (1 - ratio) * bg_score


def _ssim(saliency: np.ndarray, gt: np.ndarray) -> float:
    n = saliency.size
    if n == 0:
        return 0.0
    gt = gt.astype(np.float64)
    x, y = saliency.mean(), gt.mean()
    if n > 1:
        sigma_x = np.sum((saliency - x) ** 2) / (n - 1)
        sigma_y = np.sum((gt - y) ** 2) / (n - 1)
        sigma_xy = np.sum((saliency - x) * (gt - y)) / (n - 1)
    else:
        sigma_x = sigma_y = sigma_xy = 0.0
    alpha = 4 * x * y * sigma_xy
    beta = (x**2 + y**2) * (sigma_x + sigma_y)
    if alpha != 0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0 else 0.0


def _region(saliency: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    area = h * w
    ys, xs = np.nonzero(gt)
    cy = int(np.round(ys.mean())) + 1
    cx = int(np.round(xs.mean())) + 1
    quadrants = (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, w)),
        (slice(cy, h), slice(0, cx)),
        (slice(cy, h), slice(cx, w)),
    )
    score = 0.0
    for rows, cols in quadrants:
        part = gt[rows, cols]
        score += part.size / area * _ssim(saliency[rows, cols], part)
    return score


def s_measure(saliency: np.ndarray, gt: np.ndarray, alpha: float = S_ALPHA) -> float:
    """Structure measure: `alpha * object + (1 - alpha) * region` similarity."""
    saliency, gt = _prepare(saliency, gt)
    ratio = gt.mean()
    if ratio == 0:
        return float(1 - saliency.mean())
    if ratio == 1:
        return float(saliency.mean())
    score = alpha * _object(saliency, gt) + (1 - alpha) * _region(saliency, gt)
    return float(max(score, 0.0))
