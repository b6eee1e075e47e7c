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
import threading
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pyuvos.errors import ShapeError, TensorError
from pyuvos.settings import PyuvosSettings

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording them for backward."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class MultiplyCounter:
    """Count scalar multiplies performed by tagged matmuls.

    Used as a context manager; counters nest, and every active counter sees every
    tagged matmul issued on the current thread.

    Attributes:
        counts: Mapping of tag to the number of multiplies seen.
    """

    def __init__(self) -> None:
        self.counts: Dict[str, int] = {}

    def __enter__(self) -> "MultiplyCounter":
        stack = getattr(_state, "counters", None)
        if stack is None:
            stack = []
            _state.counters = stack
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.counters.remove(self)

    def __getitem__(self, tag: str) -> int:
        return self.counts.get(tag, 0)

    @staticmethod
    def record(tag: Optional[str], mults: int) -> None:
        if tag is None:
            return
        for counter in getattr(_state, "counters", None) or []:
            counter.counts[tag] = counter.counts.get(tag, 0) + int(mults)


def default_dtype() -> np.dtype:
    return np.dtype(PyuvosSettings().default_dtype)


def as_array(data: Any, dtype: Optional[np.dtype] = None) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=default_dtype())


class Function:
    """Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which receives the
    gradient w.r.t. the output and returns one gradient (or `None`) per input tensor.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Union[np.ndarray, Tuple]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        if PyuvosSettings().check_finite and not np.all(np.isfinite(out_data)):
            raise TensorError(f"{cls.__name__} produced non-finite values")
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum `grad` down to `shape`, undoing numpy broadcasting."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class ComputeGraph:
    """The ops reachable from a root tensor, in topological order.

    Attributes:
        root: The tensor the graph was built from.
        nodes: Tensors in topological order (inputs before outputs).
    """

    def __init__(self, root: "Tensor") -> None:
        self.root = root
        self.nodes: List[Tensor] = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                self.nodes.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.tensors:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

    def __len__(self):
        return len([node for node in self.nodes if node.creator is not None])

    def run_backward(self, seed: np.ndarray) -> None:
        grads = {id(self.root): seed}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node._accumulate(grad)
                continue
            if node.retains_grad:
                node._accumulate(grad)
            input_grads = node.creator.backward(grad)
            if not isinstance(input_grads, tuple):
                input_grads = (input_grads,)
            for parent, parent_grad in zip(node.creator.tensors, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = Function.unbroadcast(
                    np.asarray(parent_grad, dtype=parent.data.dtype), parent.shape
                )
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad


class Tensor:
    """An N-dimensional float array that records the ops producing it.

    Attributes:
        data: The values, row-major, `float32` unless created in 64-bit check mode.
        grad: Accumulated gradient of the same shape, or `None` before backward.
        requires_grad: Whether gradients flow to (and through) this tensor.
        creator: The `Function` that produced this tensor, `None` for leaves.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
        dtype: Optional[np.dtype] = None,
    ) -> None:
        self.data = as_array(data, dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name
        self.retains_grad = False
        self._backward_done = False

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise TensorError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def retain_grad(self) -> "Tensor":
        self.retains_grad = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """Populate `.grad` of every leaf that requires grad.

        The tensor must be a scalar; its graph can be walked only once.
        """
        if self.data.size != 1:
            raise TensorError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._backward_done:
            raise TensorError("backward called twice on the same graph; run a new forward pass first")
        if not self.requires_grad:
            raise TensorError("loss does not depend on any tensor that requires grad")
        graph = ComputeGraph(self)
        logging.debug(f"backward through {len(graph)} ops")
        graph.run_backward(np.ones_like(self.data))
        self._backward_done = True

    # arithmetic sugar, routed through the differentiable ops
    def _wrap(self, other: Any) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        return _ops().add(self, self._wrap(other))

    def __radd__(self, other):
        return _ops().add(self._wrap(other), self)

    def __sub__(self, other):
        return _ops().sub(self, self._wrap(other))

    def __rsub__(self, other):
        return _ops().sub(self._wrap(other), self)

    def __mul__(self, other):
        return _ops().mul(self, self._wrap(other))

    def __rmul__(self, other):
        return _ops().mul(self._wrap(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return _ops().mul(self, _ops().power(other, -1.0))
        return _ops().mul(self, self._wrap(1.0 / other))

    def __neg__(self):
        return _ops().mul(self, self._wrap(-1.0))

    def __pow__(self, exponent: float):
        return _ops().power(self, float(exponent))

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, index):
        return _ops().index(self, index)

    def reshape(self, *shape: Union[int, Sequence[int]]) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def permute(self, *axes: int) -> "Tensor":
        return _ops().permute(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops().reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops().reduce_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops().reduce_max(self, axis=axis, keepdims=keepdims)


def check_same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _ops():
    from pyuvos.tensor import ops

    return ops
