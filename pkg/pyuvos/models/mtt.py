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

"""Mixed temporal transformer for the two deepest stages.

Each block runs a local layer (multi-head attention inside `M x M` windows that
span every frame of the clip) and then a global layer (every token attends to
keys and values spatially reduced per frame by a strided conv), both pre-norm
with an FFN after the attention.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from pyuvos.errors import ShapeError
from pyuvos.nn import Conv2d, LayerNorm, Linear, Module
from pyuvos.tensor import Tensor, ops


@dataclass
class WindowGrid:
    """How a `H x W` map is padded and cut into `M x M` windows."""

    window: int
    height: int
    width: int

    @property
    def pad_h(self) -> int:
        return (-self.height) % self.window

    @property
    def pad_w(self) -> int:
        return (-self.width) % self.window

    @property
    def padded(self) -> Tuple[int, int]:
        return self.height + self.pad_h, self.width + self.pad_w

    @property
    def count(self) -> int:
        hp, wp = self.padded
        return (hp // self.window) * (wp // self.window)

    def tokens_per_window(self, frames: int) -> int:
        return frames * self.window * self.window

    def key_mask(self, frames: int) -> Optional[np.ndarray]:
        """`[windows, 1, 1, T*M*M]` boolean mask of real (unpadded) keys, `None` without padding."""
        if not (self.pad_h or self.pad_w):
            return None
        hp, wp = self.padded
        m = self.window
        valid = np.zeros((hp, wp), dtype=bool)
        valid[: self.height, : self.width] = True
        valid = valid.reshape(hp // m, m, wp // m, m).transpose(0, 2, 1, 3)
        valid = np.broadcast_to(valid[:, :, None], (hp // m, wp // m, frames, m, m))
        return valid.reshape(self.count, 1, 1, frames * m * m)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with `heads` heads of width `dim / heads`."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise ShapeError(f"{heads} heads do not divide dim {dim}")
        self.dim, self.heads = dim, heads
        self.scale = (dim // heads) ** -0.5
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)
        # weights of the latest call, kept only when asked for; unreliable if the
        # module is shared between concurrent inference threads
        self.keep_attention = False
        self.last_attention: Optional[np.ndarray] = None

    def _heads(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return ops.permute(ops.reshape(x, (b, n, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def attend(self, queries: Tensor, keys: Tensor, mask: Optional[np.ndarray] = None, tag: Optional[str] = None) -> Tensor:
        """`queries [B, Nq, d]` attend to `keys [B, Nk, d]` (also the values)."""
        b, nq, d = queries.shape
        q = self._heads(self.q(queries))
        k = self._heads(self.k(keys))
        v = self._heads(self.v(keys))
        scores = ops.matmul(q, ops.transpose(k), tag=tag) * self.scale
        weights = ops.softmax(scores, axis=-1, mask=mask)
        if self.keep_attention:
            self.last_attention = weights.data
        out = ops.matmul(weights, v, tag=tag)
        out = ops.reshape(ops.permute(out, (0, 2, 1, 3)), (b, nq, d))
        return self.proj(out)


class LocalTemporalAttention(Module):
    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        super().__init__()
        self.window = window
        self.attn = MultiHeadAttention(dim, heads, rng)

    def forward(self, x: Tensor) -> Tensor:
        t, d, h, w = x.shape
        grid = WindowGrid(self.window, h, w)
        hp, wp = grid.padded
        if grid.pad_h or grid.pad_w:
            x = ops.pad2d(x, (0, grid.pad_h, 0, grid.pad_w))
        tokens = ops.window_partition(x, self.window)
        out = self.attn.attend(tokens, tokens, mask=grid.key_mask(t), tag="lttl")
        out = ops.window_unpartition(out, self.window, t, hp, wp)
        if grid.pad_h or grid.pad_w:
            out = out[:, :, :h, :w]
        return out


class GlobalTemporalAttention(Module):
    """Full queries against per-frame spatially reduced keys and values."""

    def __init__(self, dim: int, heads: int, sr_ratio: int, rng: np.random.Generator):
        super().__init__()
        self.sr_ratio = sr_ratio
        self.attn = MultiHeadAttention(dim, heads, rng)
        if sr_ratio > 1:
            self.sr = Conv2d(dim, dim, sr_ratio, rng, stride=sr_ratio)
            self.norm = LayerNorm(dim)

    @staticmethod
    def _tokens(x: Tensor) -> Tensor:
        t, d, h, w = x.shape
        return ops.reshape(ops.permute(x, (0, 2, 3, 1)), (1, t * h * w, d))

    def reduce(self, x: Tensor) -> Tensor:
        """Keys/values source, `[1, T*H*W/r^2, d]`."""
        r = self.sr_ratio
        if x.shape[2] % r or x.shape[3] % r:
            raise ShapeError(f"sr ratio {r} does not divide {x.shape[2]}x{x.shape[3]}")
        if r == 1:
            return self._tokens(x)
        return self._tokens(self.norm(self.sr(x)))

    def forward(self, x: Tensor) -> Tensor:
        t, d, h, w = x.shape
        out = self.attn.attend(self._tokens(x), self.reduce(x), tag="gttl")
        return ops.permute(ops.reshape(out, (t, h, w, d)), (0, 3, 1, 2))


class FeedForward(Module):
    def __init__(self, dim: int, ratio: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Conv2d(dim, dim * ratio, 1, rng)
        self.fc2 = Conv2d(dim * ratio, dim, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


class MixedTemporalBlock(Module):
    """One local layer followed by one global layer, each with its FFN."""

    def __init__(self, dim: int, heads: int, window: int, sr_ratio: int, mlp_ratio: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.local = LocalTemporalAttention(dim, heads, window, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn1 = FeedForward(dim, mlp_ratio, rng)
        self.norm3 = LayerNorm(dim)
        self.glob = GlobalTemporalAttention(dim, heads, sr_ratio, rng)
        self.norm4 = LayerNorm(dim)
        self.ffn2 = FeedForward(dim, mlp_ratio, rng)

    def lttl(self, b: Tensor) -> Tensor:
        l = self.local(self.norm1(b)) + b
        return self.ffn1(self.norm2(l)) + l

    def gttl(self, l: Tensor) -> Tensor:
        g = self.glob(self.norm3(l)) + l
        return self.ffn2(self.norm4(g)) + g

    def forward(self, b: Tensor) -> Tensor:
        if b.ndim != 4:
            raise ShapeError(f"mixed block expects [T, d, H, W], got {b.shape}")
        return self.gttl(self.lttl(b))

    mixed_block = forward


def temporal_encoding(frames: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal frame-index encoding, `[T, d, 1, 1]`."""
    position = np.arange(frames, dtype=np.float64)[:, None]
    rate = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((frames, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(position * rate)
    table[:, 1::2] = np.cos(position * rate[: dim // 2])
    return table.astype(dtype).reshape(frames, dim, 1, 1)


class MixedTemporalTransformer(Module):
    """`depth` mixed blocks at one stage, with optional frame-index encoding."""

    def __init__(
        self,
        dim: int,
        heads: int,
        window: int,
        sr_ratio: int,
        rng: np.random.Generator,
        depth: int = 1,
        mlp_ratio: int = 4,
        pos_encoding: bool = False,
    ):
        super().__init__()
        self.pos_encoding = pos_encoding
        self.blocks = [MixedTemporalBlock(dim, heads, window, sr_ratio, mlp_ratio, rng) for _ in range(depth)]

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            if self.pos_encoding:
                x = x + Tensor(temporal_encoding(x.shape[0], x.shape[1], x.dtype))
            x = block(x)
        return x


def count_attention_flops(T: int, H: int, W: int, d: int, M: int, r: int) -> Tuple[int, int, int]:
    """Scalar multiplies of `QK^T` plus `attn V` for the two layers and for dense attention.

    `M` is the window side in tokens, so `lttl / dense = M^2 / (H W)`: local equals
    dense only when one window covers the map (`M = H = W`), and doubling `M`
    quadruples the local cost. Counted in windows per side `g = H / M` instead, one
    window gives dense cost and doubling `g` divides it by 4.

    Returns:
        `(lttl, gttl, dense)` where, with `H', W'` the window-padded extents,
        lttl = (H'W'/M^2) * 2 (T M^2)^2 d, gttl = 2 (T H W)(T H W / r^2) d and
        dense = 2 (T H W)^2 d. Local attention is cheaper than dense by the window
        count `H W / M^2`.
    """
    grid = WindowGrid(M, H, W)
    n = grid.tokens_per_window(T)
    lttl = grid.count * 2 * n * n * d
    tokens = T * H * W
    if H % r or W % r:
        raise ShapeError(f"sr ratio {r} does not divide {H}x{W}")
    gttl = 2 * tokens * (T * (H // r) * (W // r)) * d
    dense = 2 * tokens * tokens * d
    return lttl, gttl, dense
