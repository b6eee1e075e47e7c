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

from pyuvos.tensor import ops
from pyuvos.tensor.checkpoint import load_checkpoint, save_checkpoint
from pyuvos.tensor.gradcheck import GradcheckResult, gradcheck
from pyuvos.tensor.tensor import (
    ComputeGraph,
    Function,
    MultiplyCounter,
    Tensor,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "ComputeGraph",
    "Function",
    "GradcheckResult",
    "MultiplyCounter",
    "Tensor",
    "gradcheck",
    "is_grad_enabled",
    "load_checkpoint",
    "no_grad",
    "ops",
    "save_checkpoint",
]
