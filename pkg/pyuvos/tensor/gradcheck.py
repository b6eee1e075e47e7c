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
from typing import Callable, List, Sequence, Tuple

import numpy as np

from pyuvos.errors import TensorError
from pyuvos.tensor.tensor import Tensor, no_grad


@dataclass
class GradcheckResult:
    """Outcome of a finite-difference comparison.

    Attributes:
        checked: Number of coordinates compared.
        max_rel_error: Largest `|analytic - numeric| / max(|analytic|, |numeric|)` seen.
        failures: `(leaf index, flat index, analytic, numeric)` for every coordinate out of tolerance.
    """

    checked: int = 0
    max_rel_error: float = 0.0
    failures: List[Tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.checked > 0 and not self.failures


def gradcheck(
    loss_fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    n_coords: int = 20,
    eps: float = 1e-6,
    rtol: float = 1e-3,
    atol: float = 1e-7,
    seed: int = 0,
) -> GradcheckResult:
    """Compare backward gradients with central differences.

    `loss_fn` rebuilds the scalar loss from the current leaf values; the leaves
    should hold float64 data so the differences resolve. Up to `n_coords` random
    coordinates are checked per leaf.
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise TensorError(f"gradcheck needs float64 leaves, got {leaf.dtype}")
        leaf.data = np.ascontiguousarray(leaf.data)
        leaf.zero_grad()
    loss_fn().backward()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    rng = np.random.default_rng(seed)
    result = GradcheckResult()
    for li, leaf in enumerate(leaves):
        flat = leaf.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in picks:
            original = flat[i]
            with no_grad():
                flat[i] = original + eps
                plus = loss_fn().item()
                flat[i] = original - eps
                minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            exact = float(analytic[li].reshape(-1)[i])
            scale = max(abs(exact), abs(numeric))
            error = abs(exact - numeric)
            result.checked += 1
            if scale > 0:
                result.max_rel_error = max(result.max_rel_error, error / scale)
            if error > atol + rtol * scale:
                result.failures.append((li, int(i), exact, numeric))
    if result.failures:
        logging.debug(f"gradcheck: {len(result.failures)} of {result.checked} coordinates out of tolerance")
    return result
