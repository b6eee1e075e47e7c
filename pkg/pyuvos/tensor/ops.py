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

"""Differentiable kernels.

Every op is a `Function` subclass with a numpy forward and backward, plus a thin
functional wrapper that validates shapes and raises `ShapeError` on misuse.
Reductions run in numpy's fixed serial order, so identical inputs give
bit-identical outputs.
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from pyuvos.errors import ShapeError, TensorError
from pyuvos.tensor.tensor import Function, MultiplyCounter, Tensor

Axis = Union[None, int, Sequence[int]]


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)


def _broadcast_shape(a: Tensor, b: Tensor, what: str) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{what}: cannot broadcast {a.shape} with {b.shape}")


# elementwise


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Power(Function):
    def forward(self, x, exponent: float = 1.0):
        self.x, self.exponent = x, exponent
        return np.power(x, x.dtype.type(exponent))

    def backward(self, grad):
        e = self.x.dtype.type(self.exponent)
        return grad * e * np.power(self.x, e - 1)


class Sigmoid(Function):
    def forward(self, x):
        self.out = _stable_sigmoid(x)
        return self.out

    def backward(self, grad):
        return grad * self.out * (1 - self.out)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return grad * self.mask


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    return Mul.apply(a, b)


def power(x: Tensor, exponent: float) -> Tensor:
    return Power.apply(x, exponent=exponent)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


ELEMENTWISE_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "relu": relu,
}


def elementwise(op: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Dispatch one of `add`, `sub`, `mul`, `sigmoid`, `relu` by name."""
    if op not in ELEMENTWISE_OPS:
        raise TensorError(f"unknown elementwise op: {op}")
    if op in ("sigmoid", "relu"):
        return ELEMENTWISE_OPS[op](a)
    if b is None:
        raise TensorError(f"{op} needs two operands")
    return ELEMENTWISE_OPS[op](a, b)


# contraction and attention


class MatMul(Function):
    def forward(self, a, b, tag: Optional[str] = None):
        self.a, self.b = a, b
        out = np.matmul(a, b)
        m, k = a.shape[-2:]
        n = b.shape[-1]
        batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
        MultiplyCounter.record(tag, batch * m * k * n)
        return out

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return ga, gb


def matmul(a: Tensor, b: Tensor, tag: Optional[str] = None) -> Tensor:
    """Batched matrix product `[.., m, k] @ [.., k, n] -> [.., m, n]`.

    Parameters:
        tag: When set, the multiply count is reported to active `MultiplyCounter`s.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    return MatMul.apply(a, b, tag=tag)


class Softmax(Function):
    def forward(self, x, axis: int = -1, mask: Optional[np.ndarray] = None):
        self.axis = axis
        if mask is not None:
            x = np.where(mask, x, -np.inf)
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-stabilised softmax along `axis`.

    Parameters:
        mask: Optional boolean array broadcastable to `x`; `False` entries get an
            additive -inf before normalisation. Every row must keep one entry.
    """
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not np.all(np.any(np.broadcast_to(mask, x.shape), axis=axis)):
            raise TensorError("softmax mask removes every entry of a row")
    return Softmax.apply(x, axis=axis, mask=mask)


# reductions


class Sum(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.shape = x.shape
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        return np.sum(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return np.broadcast_to(grad, self.shape).copy()


class Mean(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.shape = x.shape
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([x.shape[a] for a in self.axes], dtype=np.int64))
        return np.mean(x, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return np.broadcast_to(grad / self.count, self.shape).copy()


class Max(Function):
    def forward(self, x, axis=None, keepdims: bool = False):
        self.shape = x.shape
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        k = len(self.axes)
        moved = np.moveaxis(x, self.axes, tuple(range(x.ndim - k, x.ndim)))
        self.moved_shape = moved.shape
        flat = moved.reshape(moved.shape[: x.ndim - k] + (-1,))
        self.index = np.argmax(flat, axis=-1)[..., None]
        out = np.take_along_axis(flat, self.index, axis=-1)[..., 0]
        if keepdims:
            out = np.expand_dims(out, self.axes)
        return out

    def backward(self, grad):
        if self.keepdims:
            grad = np.squeeze(grad, axis=self.axes)
        ndim, k = len(self.shape), len(self.axes)
        kept = self.moved_shape[: ndim - k]
        flat = np.zeros(kept + (int(np.prod(self.moved_shape[ndim - k :])),), dtype=grad.dtype)
        np.put_along_axis(flat, self.index, np.reshape(grad, kept + (1,)), axis=-1)
        moved = flat.reshape(self.moved_shape)
        return np.moveaxis(moved, tuple(range(ndim - k, ndim)), self.axes)


def reduce_sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def reduce_mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reduce_max(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Max.apply(x, axis=axis, keepdims=keepdims)


def reduce(x: Tensor, kind: str, axis: Axis, keepdims: bool = True) -> Tensor:
    """Channel-style reduction, `kind` is `mean` or `max`."""
    if kind == "mean":
        return reduce_mean(x, axis=axis, keepdims=keepdims)
    if kind == "max":
        return reduce_max(x, axis=axis, keepdims=keepdims)
    raise TensorError(f"unknown reduction: {kind}")


# shape plumbing


class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return grad.reshape(self.shape)


class Permute(Function):
    def forward(self, x, axes=()):
        self.inverse = tuple(np.argsort(axes))
        return np.transpose(x, axes)

    def backward(self, grad):
        return np.transpose(grad, self.inverse)


class Index(Function):
    def forward(self, x, index=None):
        self.shape, self.index = x.shape, index
        return x[index]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        idx = self.index if isinstance(self.index, tuple) else (self.index,)
        if any(isinstance(i, (list, np.ndarray)) for i in idx):
            np.add.at(out, self.index, grad)
        else:
            out[self.index] += grad
        return out


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Pad2d(Function):
    def forward(self, x, pads=(0, 0, 0, 0)):
        top, bottom, left, right = pads
        self.crop = (slice(top, x.shape[-2] + top), slice(left, x.shape[-1] + left))
        width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
        return np.pad(x, width)

    def backward(self, grad):
        return grad[(Ellipsis,) + self.crop]


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    known = int(np.prod([s for s in shape if s != -1], dtype=np.int64))
    inferred = shape.count(-1)
    if inferred > 1 or (inferred == 0 and known != x.size) or (inferred and (known == 0 or x.size % known)):
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    return Reshape.apply(x, shape=shape)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for rank {x.ndim}")
    return Permute.apply(x, axes=axes)


def transpose(x: Tensor, axis0: int = -2, axis1: int = -1) -> Tensor:
    axes = list(range(x.ndim))
    axes[axis0], axes[axis1] = axes[axis1], axes[axis0]
    return permute(x, axes)


def index(x: Tensor, idx) -> Tensor:
    return Index.apply(x, index=idx)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != ax
        ):
            raise ShapeError(f"concat along {axis}: {ref} vs {t.shape}")
    return Concat.apply(*tensors, axis=ax)


def split(x: Tensor, sizes: Union[int, Sequence[int]], axis: int = 0) -> List[Tensor]:
    """Split along `axis` into `sizes` (a list of extents or a number of equal parts)."""
    extent = x.shape[axis]
    if isinstance(sizes, int):
        if extent % sizes:
            raise ShapeError(f"cannot split extent {extent} into {sizes} equal parts")
        sizes = [extent // sizes] * sizes
    if sum(sizes) != extent:
        raise ShapeError(f"split sizes {list(sizes)} do not add up to {extent}")
    parts = []
    start = 0
    for size in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + size)
        parts.append(index(x, tuple(idx)))
        start += size
    return parts


def pad2d(x: Tensor, pads: Tuple[int, int, int, int]) -> Tensor:
    """Zero-pad the last two axes by `(top, bottom, left, right)`."""
    return Pad2d.apply(x, pads=tuple(int(p) for p in pads))


def window_partition(x: Tensor, window: int) -> Tensor:
    """`[T, d, H, W]` -> `[H/M * W/M, T*M*M, d]`, tokens ordered (t, row, col) per window."""
    t, d, h, w = x.shape
    if h % window or w % window:
        raise ShapeError(f"window {window} does not divide {h}x{w}")
    x = reshape(x, (t, d, h // window, window, w // window, window))
    x = permute(x, (2, 4, 0, 3, 5, 1))
    return reshape(x, ((h // window) * (w // window), t * window * window, d))


def window_unpartition(x: Tensor, window: int, t: int, h: int, w: int) -> Tensor:
    """Inverse of `window_partition`."""
    d = x.shape[-1]
    x = reshape(x, (h // window, w // window, t, window, window, d))
    x = permute(x, (2, 5, 0, 3, 1, 4))
    return reshape(x, (t, d, h, w))


# convolution, pooling, resampling


def _conv_extent(size: int, kernel: int, stride: int, padding: int, what: str) -> int:
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"{what}: kernel {kernel} larger than padded input {size + 2 * padding}")
    if span % stride:
        raise ShapeError(f"{what}: output extent ({size}+2*{padding}-{kernel})/{stride}+1 is not integral")
    return span // stride + 1


class Conv2d(Function):
    def forward(self, x, w, b=None, stride: int = 1, padding: int = 0, groups: int = 1):
        n, c, h, wd = x.shape
        o, cg, kh, kw = w.shape
        self.geometry = (n, c, h, wd, o, cg, kh, kw, stride, padding, groups)
        self.has_bias = b is not None
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = xp.shape
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        ho, wo = win.shape[2], win.shape[3]
        self.win = win.reshape(n, groups, cg, ho, wo, kh, kw)
        self.wg = w.reshape(groups, o // groups, cg, kh, kw)
        out = np.einsum("ngchwij,gocij->ngohw", self.win, self.wg, optimize=True)
        out = out.reshape(n, o, ho, wo)
        if b is not None:
            out = out + b.reshape(1, -1, 1, 1)
        return out

    def backward(self, grad):
        n, c, h, wd, o, cg, kh, kw, stride, padding, groups = self.geometry
        ho, wo = grad.shape[2], grad.shape[3]
        g = grad.reshape(n, groups, o // groups, ho, wo)
        dw = np.einsum("ngohw,ngchwij->gocij", g, self.win, optimize=True).reshape(o, cg, kh, kw)
        dwin = np.einsum("ngohw,gocij->ngchwij", g, self.wg, optimize=True)
        dwin = dwin.reshape(n, c, ho, wo, kh, kw)
        dxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dwin[..., i, j]
        dx = dxp[:, :, padding : padding + h, padding : padding + wd]
        if self.has_bias:
            return dx, dw, grad.sum(axis=(0, 2, 3))
        return dx, dw


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D convolution of `[N, Cin, H, W]` with `[Cout, Cin/groups, k, k]` weights."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d needs rank-4 input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, cg, kh, kw = weight.shape
    if c != cg * groups or o % groups:
        raise ShapeError(f"conv2d: {c} input channels, weight {weight.shape}, groups={groups}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} for {o} output channels")
    _conv_extent(h, kh, stride, padding, "conv2d")
    _conv_extent(w, kw, stride, padding, "conv2d")
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return Conv2d.apply(*inputs, stride=stride, padding=padding, groups=groups)


class Pool2d(Function):
    def forward(self, x, kind: str = "avg", window: int = 2, stride: int = 2):
        self.kind, self.window, self.stride, self.shape = kind, window, stride, x.shape
        win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
        flat = win.reshape(win.shape[:4] + (-1,))
        if kind == "avg":
            return flat.mean(axis=-1)
        self.index = np.argmax(flat, axis=-1)
        return np.take_along_axis(flat, self.index[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        k, s = self.window, self.stride
        ho, wo = grad.shape[2], grad.shape[3]
        dx = np.zeros(self.shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                if self.kind == "avg":
                    part = grad / (k * k)
                else:
                    part = grad * (self.index == i * k + j)
                dx[:, :, i : i + s * ho : s, j : j + s * wo : s] += part
        return dx


def pool2d(x: Tensor, kind: str, window: int = 2, stride: Optional[int] = None) -> Tensor:
    """Spatial pooling of `[N, C, H, W]`.

    Parameters:
        kind: `avg`, `max`, `global-avg` or `global-max`. Global kinds return `[N, C, 1, 1]`.
        window: Square window side for the local kinds.
        stride: Defaults to `window`.
    """
    if kind == "global-avg":
        return reduce_mean(x, axis=(2, 3), keepdims=True)
    if kind == "global-max":
        return reduce_max(x, axis=(2, 3), keepdims=True)
    if kind not in ("avg", "max"):
        raise TensorError(f"unknown pooling kind: {kind}")
    stride = stride or window
    if window > x.shape[2] or window > x.shape[3]:
        raise ShapeError(f"pool window {window} larger than input {x.shape[2]}x{x.shape[3]}")
    return Pool2d.apply(x, kind=kind, window=window, stride=stride)


def global_avg_pool(x: Tensor) -> Tensor:
    return pool2d(x, "global-avg")


def global_max_pool(x: Tensor) -> Tensor:
    return pool2d(x, "global-max")


def bilinear_matrix(in_size: int, out_size: int, dtype=np.float32) -> np.ndarray:
    """Row-stochastic `[out, in]` interpolation matrix, half-pixel centres, edge clamped."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


class ResizeBilinear(Function):
    def forward(self, x, out_h: int = 1, out_w: int = 1):
        self.ry = bilinear_matrix(x.shape[-2], out_h, x.dtype)
        self.rx = bilinear_matrix(x.shape[-1], out_w, x.dtype)
        return np.matmul(np.matmul(self.ry, x), self.rx.T)

    def backward(self, grad):
        return np.matmul(np.matmul(self.ry.T, grad), self.rx)


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize target {out_h}x{out_w} is empty")
    if (out_h, out_w) == x.shape[-2:]:
        return x
    return ResizeBilinear.apply(x, out_h=int(out_h), out_w=int(out_w))


def upsample_bilinear(x: Tensor, scale: int) -> Tensor:
    """Bilinear up-sampling by an integer factor (align-corners=False convention)."""
    if int(scale) != scale or scale < 1:
        raise ShapeError(f"upsample scale must be an integer >= 1, got {scale}")
    scale = int(scale)
    return resize_bilinear(x, x.shape[-2] * scale, x.shape[-1] * scale)


# normalisation


class LayerNorm(Function):
    def forward(self, x, gamma, beta, axis: int = 1, eps: float = 1e-6):
        self.axis = axis % x.ndim
        shape = [1] * x.ndim
        shape[self.axis] = x.shape[self.axis]
        self.gamma = gamma.reshape(shape)
        mu = x.mean(axis=self.axis, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=self.axis, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
        self.xhat = centered * self.inv
        return self.xhat * self.gamma + beta.reshape(shape)

    def backward(self, grad):
        others = tuple(a for a in range(grad.ndim) if a != self.axis)
        dxhat = grad * self.gamma
        dx = self.inv * (
            dxhat
            - dxhat.mean(axis=self.axis, keepdims=True)
            - self.xhat * (dxhat * self.xhat).mean(axis=self.axis, keepdims=True)
        )
        return dx, (grad * self.xhat).sum(axis=others), grad.sum(axis=others)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = 1, eps: float = 1e-6) -> Tensor:
    """Normalise over `axis` (the channel axis by default), then apply the affine."""
    extent = x.shape[axis]
    if gamma.shape != (extent,) or beta.shape != (extent,):
        raise ShapeError(f"layer_norm over {extent} channels got affine {gamma.shape}/{beta.shape}")
    return LayerNorm.apply(x, gamma, beta, axis=axis, eps=eps)


class BatchNorm(Function):
    def forward(self, x, gamma, beta, mean=None, var=None, eps: float = 1e-5):
        shape = (1, -1, 1, 1)
        self.gamma = gamma.reshape(shape)
        self.batch_stats = mean is None
        if self.batch_stats:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
        self.inv = (1.0 / np.sqrt(var + x.dtype.type(eps))).astype(x.dtype).reshape(shape)
        self.xhat = (x - mean.reshape(shape)) * self.inv
        return self.xhat * self.gamma + beta.reshape(shape)

    def backward(self, grad):
        axes = (0, 2, 3)
        dxhat = grad * self.gamma
        if self.batch_stats:
            dx = self.inv * (
                dxhat
                - dxhat.mean(axis=axes, keepdims=True)
                - self.xhat * (dxhat * self.xhat).mean(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * self.inv
        return dx, (grad * self.xhat).sum(axis=axes), grad.sum(axis=axes)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    eps: float = 1e-5,
) -> Tensor:
    """Batch norm over `(N, H, W)`; batch statistics unless running ones are given."""
    return BatchNorm.apply(x, gamma, beta, mean=running_mean, var=running_var, eps=eps)


# loss


class BinaryCrossEntropy(Function):
    def forward(self, logits, target, eps: float = 1e-7):
        self.p = _stable_sigmoid(logits)
        self.target = target
        self.live = (self.p > eps) & (self.p < 1 - eps)
        pc = np.clip(self.p.astype(np.float64), eps, 1 - eps)
        t = target.astype(np.float64)
        loss = -(t * np.log(pc) + (1 - t) * np.log(1 - pc))
        return np.asarray(loss.mean(), dtype=logits.dtype)

    def backward(self, grad):
        n = self.p.size
        return grad * (self.p - self.target) * self.live / n, None


def binary_cross_entropy(logits: Tensor, target: Tensor, eps: float = 1e-7) -> Tensor:
    """Mean BCE of `sigmoid(logits)` against a {0,1} target, probabilities clamped to [eps, 1-eps]."""
    if logits.shape != target.shape:
        raise ShapeError(f"bce: logits {logits.shape} vs target {target.shape}")
    return BinaryCrossEntropy.apply(logits, target, eps=eps)
