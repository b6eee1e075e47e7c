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

from typing import Dict, List, Sequence, Tuple

import numpy as np

from pyuvos.errors import TrainingError
from pyuvos.nn import Parameter


def adamw_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 0.01,
    eps: float = 1e-8,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One AdamW update of a single array; returns `(param, m, v)`.

    Weight decay is decoupled and applied before the moment update, `step` is 1-based.
    """
    b1, b2 = betas
    param = param * (1 - lr * weight_decay)
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**step)
    v_hat = v / (1 - b2**step)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class AdamW:
    """AdamW over a fixed list of parameters."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 3e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        weight_decay: float = 0.01,
        eps: float = 1e-8,
    ):
        self.params: List[Parameter] = list(params)
        self.lr, self.betas, self.weight_decay, self.eps = lr, tuple(betas), weight_decay, eps
        self.steps = 0
        self.state: Dict[int, Tuple[np.ndarray, np.ndarray]] = {
            i: (np.zeros_like(p.data), np.zeros_like(p.data)) for i, p in enumerate(self.params)
        }

    def step(self) -> None:
        if all(p.grad is None for p in self.params):
            raise TrainingError("optimizer step before backward: no parameter has a gradient")
        self.steps += 1
        for i, p in enumerate(self.params):
            # parameters the loss does not reach are left alone
            if p.grad is None:
                continue
            m, v = self.state[i]
            data, m, v = adamw_step(
                p.data, p.grad, m, v, self.steps, self.lr, self.betas, self.weight_decay, self.eps
            )
            p.data = data.astype(p.dtype, copy=False)
            self.state[i] = (m, v)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
