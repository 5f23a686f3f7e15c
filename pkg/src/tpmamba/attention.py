"""Non-shifted window multi-head self-attention with a learned relative position bias."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Linear, Module, parameter
from .rng import SplitMix64
from .tensor import ShapeError, Tensor


def window_partition(x: Tensor, window: int) -> Tensor:
    """[B, C, H, W] -> [B*nw, window*window, C], windows in raster order."""
    B, C, H, W = x.shape
    if H % window or W % window:
        raise ShapeError(f"{H}x{W} is not divisible by window {window}; pad upstream")
    nh, nw = H // window, W // window
    y = T.reshape(x, (B, C, nh, window, nw, window))
    y = T.transpose(y, (0, 2, 4, 3, 5, 1))
    return T.reshape(y, (B * nh * nw, window * window, C))


def window_merge(xw: Tensor, window: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    nwin, tokens, C = xw.shape
    nh, nw = h // window, w // window
    B = nwin // (nh * nw)
    y = T.reshape(xw, (B, nh, nw, window, window, C))
    y = T.transpose(y, (0, 5, 1, 3, 2, 4))
    return T.reshape(y, (B, C, h, w))


def relative_position_index(window: int) -> np.ndarray:
    """[w*w, w*w] index into a (2w-1)^2 bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (window - 1)
    return rel[0] * (2 * window - 1) + rel[1]


class WindowAttention(Module):
    def __init__(self, rng: SplitMix64, dim: int, window: int = 16, heads: int = 4,
                 rel_bias: bool = True, out_gain: float = 0.1):
        if dim % heads:
            raise ValueError(f"dim {dim} is not divisible by heads {heads}")
        self.dim, self.window, self.heads = dim, window, heads
        self.head_dim = dim // heads
        self.qkv = Linear(rng, dim, 3 * dim)
        self.proj = Linear(rng, dim, dim, gain=out_gain)
        if rel_bias:
            n = (2 * window - 1) ** 2
            self.rel_bias = parameter(rng.trunc_normal(n * heads, 0.02).reshape(n, heads))
        else:
            self.rel_bias = None
        self._rel_index = relative_position_index(window).reshape(-1)

    def bias(self) -> Tensor | None:
        if self.rel_bias is None:
            return None
        t = self.window * self.window
        b = T.take(self.rel_bias, self._rel_index, axis=0)
        return T.transpose(T.reshape(b, (t, t, self.heads)), (2, 0, 1))

    def _qkv(self, xw: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor | None]:
        nwin, t, C = xw.shape
        qkv = T.reshape(self.qkv(xw), (nwin, t, 3, self.heads, self.head_dim))
        qkv = T.transpose(qkv, (2, 0, 3, 1, 4))
        q, k, v = (T.reshape(part, (nwin, self.heads, t, self.head_dim)) for part in T.split(qkv, 3, 0))
        bias = self.bias()
        if bias is not None and t != self.window * self.window:
            raise ShapeError(f"windows hold {t} tokens, bias table expects {self.window ** 2}")
        return q, k, v, bias

    def attention_weights(self, xw: Tensor) -> Tensor:
        """Row-stochastic [num_windows, heads, tokens, tokens] attention matrix."""
        q, k, _, bias = self._qkv(xw)
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.head_dim))
        if bias is not None:
            scores = T.add(scores, bias)
        return T.softmax(scores)

    def forward(self, xw: Tensor) -> Tensor:
        """Attend within each window of a [num_windows, tokens, C] batch."""
        nwin, t, C = xw.shape
        q, k, v, bias = self._qkv(xw)
        out = T.attention(q, k, v, bias, 1.0 / math.sqrt(self.head_dim))
        out = T.transpose(out, (0, 2, 1, 3))
        return self.proj(T.reshape(out, (nwin, t, C)))

    def forward_image(self, x: Tensor) -> Tensor:
        _, _, H, W = x.shape
        return window_merge(self.forward(window_partition(x, self.window)), self.window, H, W)

    def macs(self, h: int, w: int) -> int:
        tokens = h * w
        t = self.window * self.window
        return self.qkv.macs(tokens) + self.proj.macs(tokens) + 2 * tokens * t * self.dim
