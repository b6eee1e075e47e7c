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

from typing import Sequence, Tuple, Union

import numpy as np

from pyuvos.data import LossReport
from pyuvos.errors import DataError, ShapeError
from pyuvos.tensor import Tensor, ops

BCE_EPS = 1e-7


def bce_multilevel(
    logits: Sequence[Tensor],
    target: Union[Tensor, np.ndarray],
    loss_lambda: float = 0.5,
    eps: float = BCE_EPS,
) -> Tuple[Tensor, LossReport]:
    """Multi-level binary cross-entropy.

    Every level is a mean per-pixel BCE over `T x H x W`; the total is
    `main + loss_lambda * (aux2 + aux3 + aux4)`.

    Parameters:
        logits: `P1..P4`, each `[T, 1, H, W]`.
        target: Ground truth of the same shape with values in {0, 1}.

    Returns:
        The differentiable total and a `LossReport` of the terms.
    """
    if len(logits) != 4:
        raise ShapeError(f"expected 4 prediction levels, got {len(logits)}")
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=logits[0].dtype))
    if not np.all((target.data == 0) | (target.data == 1)):
        raise DataError("ground truth must be binary")
    terms = [ops.binary_cross_entropy(level, target, eps) for level in logits]
    aux = terms[1] + terms[2] + terms[3]
    total = terms[0] + aux * loss_lambda
    report = LossReport(
        total=total.item(),
        main=terms[0].item(),
        aux=[t.item() for t in terms[1:]],
        loss_lambda=loss_lambda,
    )
    return total, report
