"""Bijective 2-D grid <-> 1-D sequence orderings used to feed the scans.

``forward[i]`` is the row-major grid index visited at sequence position ``i``;
``inverse`` undoes it.  Window layouts keep each window's tokens contiguous
and chain windows in raster order along the scan axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Axis(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


class Direction(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class Kind(str, Enum):
    WIF = "WIF"
    WFF = "WFF"
    CARDINAL = "CARDINAL"


# the four cardinal raster orders, named by start -> end corner
CARDINAL = ("tl_br", "br_tl", "tr_bl", "bl_tr")


@dataclass(frozen=True)
class ScanLayout:
    forward: np.ndarray
    inverse: np.ndarray
    height: int
    width: int
    kind: Kind
    window: int | None = None
    axis: Axis | None = None
    direction: Direction | None = None

    def __len__(self) -> int:
        return self.forward.size


def _make(order: np.ndarray, h: int, w: int, **meta) -> ScanLayout:
    order = np.ascontiguousarray(order, dtype=np.intp)
    order.setflags(write=False)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    inv.setflags(write=False)
    return ScanLayout(order, inv, h, w, **meta)


@lru_cache(maxsize=256)
def build_window_layout(
    h: int, w: int, window: int, axis: Axis | str = Axis.HORIZONTAL,
    direction: Direction | str = Direction.FORWARD, kind: Kind | str = Kind.WIF,
) -> ScanLayout:
    axis, direction, kind = Axis(axis), Direction(direction), Kind(kind)
    if window <= 0 or window > h or window > w:
        raise ShapeError(f"window {window} exceeds grid {h}x{w}")
    if h % window or w % window:
        raise ShapeError(f"grid {h}x{w} is not a multiple of window {window}")
    grid = np.arange(h * w).reshape(h // window, window, w // window, window)
    # axes: (window row, row in window, window col, col in window)
    if axis is Axis.HORIZONTAL:
        order = grid.transpose(0, 2, 1, 3)
    else:
        order = grid.transpose(2, 0, 3, 1)
    order = order.reshape(-1)
    if direction is Direction.REVERSE:
        order = order[::-1]
    return _make(order, h, w, kind=kind, window=window, axis=axis, direction=direction)


@lru_cache(maxsize=256)
def build_cardinal_layout(h: int, w: int, which: str | int) -> ScanLayout:
    """Raster scans: tl_br, br_tl (reversed), tr_bl (mirrored columns), bl_tr (mirrored, reversed)."""
    name = CARDINAL[which] if isinstance(which, int) else which
    if name not in CARDINAL:
        raise ValueError(f"unknown cardinal direction {which!r}")
    grid = np.arange(h * w).reshape(h, w)
    if name in ("tr_bl", "bl_tr"):
        grid = grid[:, ::-1]
    order = grid.reshape(-1)
    if name in ("br_tl", "bl_tr"):
        order = order[::-1]
    axis = Axis.HORIZONTAL
    direction = Direction.REVERSE if name in ("br_tl", "bl_tr") else Direction.FORWARD
    return _make(order, h, w, kind=Kind.CARDINAL, axis=axis, direction=direction)


def direction_schedule(block_index: int) -> tuple[tuple[Axis, Direction], tuple[Axis, Direction]]:
    """(axis, direction) for the WIF and WFF flattens of the given block.

    Period 4: both flattens share an axis and run in opposite directions.
    """
    if block_index < 0:
        raise ValueError("block_index must be non-negative")
    step = block_index % 4
    axis = Axis.HORIZONTAL if step % 2 == 0 else Axis.VERTICAL
    fwd, rev = Direction.FORWARD, Direction.REVERSE
    wif, wff = (fwd, rev) if step < 2 else (rev, fwd)
    return (axis, wif), (axis, wff)


def gather(x: Tensor, layout: ScanLayout) -> Tensor:
    """[B, C, H, W] -> [B, H*W, C] in layout order."""
    B, C, H, W = x.shape
    if (H, W) != (layout.height, layout.width):
        raise ShapeError(f"layout built for {layout.height}x{layout.width}, tensor is {H}x{W}")
    flat = T.reshape(x, (B, C, H * W))
    seq = T.take(flat, layout.forward, axis=2)
    return T.transpose(seq, (0, 2, 1))


def scatter(seq: Tensor, layout: ScanLayout, h: int, w: int) -> Tensor:
    """Inverse of :func:`gather`: [B, H*W, C] -> [B, C, H, W]."""
    B, L, C = seq.shape
    if (h, w) != (layout.height, layout.width) or L != h * w:
        raise ShapeError(f"layout built for {layout.height}x{layout.width}, sequence has {L} tokens for {h}x{w}")
    flat = T.take(T.transpose(seq, (0, 2, 1)), layout.inverse, axis=2)
    return T.reshape(flat, (B, C, h, w))
