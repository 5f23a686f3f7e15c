"""High-frequency refinement: HFM high-pass, multi-scale gating, channel alignment."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Linear, Module
from .rng import SplitMix64
from .tensor import ShapeError, Tensor


def hfm(f: Tensor) -> Tensor:
    """High-pass by subtracting the bilinearly re-upsampled 2x2 mean-pooled copy."""
    return T.sub(f, T.bilinear_up2(T.avg_pool2(f)))


def hfm_split(f: Tensor) -> tuple[Tensor, Tensor]:
    """(f_high, upsampled f_low); their sum reconstructs ``f``."""
    low_up = T.bilinear_up2(T.avg_pool2(f))
    return T.sub(f, low_up), low_up


class MSGM(Module):
    """Parallel depthwise 3/5/7 convs, summed, drive a sigmoid gate on the input."""

    KERNELS = (3, 5, 7)

    def __init__(self, rng: SplitMix64, dim: int):
        # reflect padding keeps a constant map constant, so the high-pass that follows kills it
        self.branches = [
            Conv2d(rng, dim, dim, k, groups=dim, padding_mode="reflect") for k in self.KERNELS
        ]
        self.gate = Conv2d(rng, dim, dim, 1)

    def forward(self, x: Tensor) -> Tensor:
        s = self.branches[0](x)
        for conv in self.branches[1:]:
            s = T.add(s, conv(x))
        return T.mul(x, T.sigmoid(self.gate(s)))

    def macs(self, h: int, w: int) -> int:
        return sum(c.macs(h, w) for c in self.branches) + self.gate.macs(h, w)


class HFCA(Module):
    """Squeeze-and-excite channel map in (0, 1), shape [B, C, 1, 1]."""

    def __init__(self, rng: SplitMix64, dim: int, reduction: int = 4):
        self.down = Linear(rng, dim, dim // reduction)
        self.up = Linear(rng, dim // reduction, dim)

    def forward(self, x: Tensor) -> Tensor:
        pooled = T.mean(x, axis=(2, 3))
        m = T.sigmoid(self.up(T.relu(self.down(pooled))))
        return T.reshape(m, m.shape + (1, 1))

    def macs(self, h: int, w: int) -> int:
        return self.down.macs(1) + self.up.macs(1)


class AHFRM(Module):
    """Restores high frequencies of ``x_lf`` using the unprocessed ``x_ori`` as reference."""

    def __init__(self, rng: SplitMix64, dim: int, use_hfm: bool = True, hfca_source: str = "x_lf"):
        self.msgm = MSGM(rng, dim)
        self.ref_dwconv = Conv2d(rng, dim, dim, 3, groups=dim)
        self.deg_conv1 = Conv2d(rng, dim, dim, 1)
        self.fuse_conv1 = Conv2d(rng, 2 * dim, dim, 1)
        self.hfca = HFCA(rng, dim)
        self.out_conv1 = Conv2d(rng, dim, dim, 1)
        self.use_hfm = use_hfm
        self.hfca_source = hfca_source

    def _high(self, x: Tensor) -> Tensor:
        return hfm(x) if self.use_hfm else x

    def branches(self, x_ori: Tensor, x_lf: Tensor) -> dict[str, Tensor]:
        """Every named intermediate of the refinement, for probing."""
        if x_ori.shape != x_lf.shape:
            raise ShapeError(f"x_ori {x_ori.shape} and x_lf {x_lf.shape} differ")
        ref = self.ref_dwconv(self._high(self.msgm(x_ori)))
        deg = self._high(self.deg_conv1(x_lf))
        x_hf = self.fuse_conv1(T.concat([ref, deg], axis=1))
        m = self.hfca(x_lf if self.hfca_source == "x_lf" else deg)
        x_sum = T.add(T.mul(x_hf, m), x_lf)
        return {"ref": ref, "deg": deg, "x_hf": x_hf, "m": m, "x_sum": x_sum, "x_r": self.out_conv1(x_sum)}

    def forward(self, x_ori: Tensor, x_lf: Tensor) -> Tensor:
        return self.branches(x_ori, x_lf)["x_r"]

    def macs(self, h: int, w: int) -> int:
        return (
            self.msgm.macs(h, w)
            + self.ref_dwconv.macs(h, w)
            + self.deg_conv1.macs(h, w)
            + self.fuse_conv1.macs(h, w)
            + self.hfca.macs(h, w)
            + self.out_conv1.macs(h, w)
        )


def ac_energy(x: np.ndarray) -> float:
    """Sum of squared deviations from the per-channel spatial mean."""
    x = np.asarray(x, dtype=np.float64)
    return float(((x - x.mean(axis=(-2, -1), keepdims=True)) ** 2).sum())
