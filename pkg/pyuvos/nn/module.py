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
from typing import Dict, Iterator, List, Tuple

import numpy as np

from pyuvos.errors import CheckpointError
from pyuvos.tensor import Tensor


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data, name: str = None):
        super().__init__(data, requires_grad=True, name=name)


class Module:
    """Base class for everything holding parameters.

    Parameters, buffers and sub-modules are discovered by walking instance
    attributes (and lists of modules) in assignment order, so names are stable
    across runs. A parameter reachable under two names is reported once, under
    the first.
    """

    def __init__(self) -> None:
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} has no forward")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_modules(self, prefix: str = "", seen=None) -> Iterator[Tuple[str, "Module"]]:
        seen = set() if seen is None else seen
        if id(self) in seen:
            return
        seen.add(id(self))
        yield prefix, self
        for name, child in self._children():
            if isinstance(child, Module):
                yield from child.named_modules(f"{prefix}{name}.", seen)

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        seen = set()
        for prefix, module in self.named_modules():
            for name, child in module._children():
                if isinstance(child, Parameter) and id(child) not in seen:
                    seen.add(id(child))
                    yield f"{prefix}{name}", child

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self) -> Iterator[Tuple[str, "Module", str]]:
        for prefix, module in self.named_modules():
            for name in module._buffers:
                yield f"{prefix}{name}", module, name

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place, e.g. to float64 for gradient checks."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, module, name in self.named_buffers():
            module._buffers[name] = module._buffers[name].astype(dtype)
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for full, module, name in self.named_buffers():
            state[full] = module._buffers[name].copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = {full: (module, name) for full, module, name in self.named_buffers()}
        expected = set(params) | set(buffers)
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise CheckpointError(
                f"checkpoint does not match the model: missing {missing[:5]}, unexpected {unexpected[:5]}"
            )
        for name, array in state.items():
            if name in params:
                target = params[name]
                if target.shape != tuple(array.shape):
                    raise CheckpointError(f"{name}: checkpoint shape {tuple(array.shape)} != model shape {target.shape}")
                target.data = np.array(array, dtype=target.dtype)
            else:
                module, key = buffers[name]
                if module._buffers[key].shape != tuple(array.shape):
                    raise CheckpointError(f"{name}: checkpoint shape {tuple(array.shape)} != model shape {module._buffers[key].shape}")
                module._buffers[key] = np.array(array, dtype=module._buffers[key].dtype)
        logging.debug(f"loaded {len(state)} tensors into {type(self).__name__}")
