"""Gradient-support and frequency-content probes on a built network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .freq import ac_energy, hfm
from .model import TPMambaSR
from .rng import SplitMix64
from .tensor import Tensor

SUPPORT_THRESHOLD = 1e-12
RF_STAGES = ("TL", "WSML", "GSML")


@dataclass
class SupportMap:
    stage: str
    magnitude: np.ndarray  # [H, W], |d y_center / d x| summed over input channels
    threshold: float = SUPPORT_THRESHOLD

    @property
    def mask(self) -> np.ndarray:
        return self.magnitude > self.threshold

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())

    def bounding_box(self) -> tuple[int, int, int, int]:
        ys, xs = np.nonzero(self.mask)
        if ys.size == 0:
            return (0, 0, 0, 0)
        return int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1

    def normalized(self) -> np.ndarray:
        """Min-max scaled to [0, 1]."""
        m = self.magnitude
        lo, hi = float(m.min()), float(m.max())
        return np.zeros_like(m) if hi == lo else (m - lo) / (hi - lo)


def probe_input(size: int, seed: int = 0) -> np.ndarray:
    return SplitMix64(seed).random(3 * size * size).reshape(1, 3, size, size)


def gradient_support(model: TPMambaSR, stage: str, size: int = 64, seed: int = 0) -> SupportMap:
    """Input-gradient magnitude of the channel-summed centre pixel of ``stage``'s feature map."""
    x = Tensor(probe_input(size, seed), requires_grad=True)
    feat = model.features(x, stage)
    cy, cx = feat.shape[-2] // 2, feat.shape[-1] // 2
    seed_grad = np.zeros(feat.shape)
    seed_grad[0, :, cy, cx] = 1.0
    feat.backward(seed_grad)
    mag = np.abs(x.grad[0]).sum(axis=0)
    model.zero_grad()
    return SupportMap(stage, mag)


def tl_support_bound(window: int, halo: int, size: int) -> float:
    """Largest coverage a window-local stage can reach: (window + 2 halo)^2 / size^2."""
    return min(1.0, (window + 2 * halo) ** 2 / (size * size))


@dataclass
class FreqReport:
    hf_before: float
    hf_after: float
    ac_before: float
    ac_after: float
    features: dict[str, np.ndarray]

    @property
    def hf_ratio(self) -> float:
        return self.hf_after / self.hf_before if self.hf_before else float("inf")

    @property
    def ac_ratio(self) -> float:
        return self.ac_after / self.ac_before if self.ac_before else float("inf")


def frequency_probe(model: TPMambaSR, lr_img: np.ndarray, group: int = 0) -> FreqReport:
    """High-pass and AC energy of the refinement input (trunk output) versus its output."""
    with T.no_grad():
        x = T.as_tensor(lr_img[None])
        f = model._pad(model.shallow(x))
        for g in model.groups[:group]:
            f = g(f)
        grp = model.groups[group]
        h = grp.trunk(f)
        parts = grp.ahfrm.branches(f, h)
        before, after = h.data, parts["x_r"].data
        hf_b = float((hfm(T.as_tensor(before)).data ** 2).sum())
        hf_a = float((hfm(T.as_tensor(after)).data ** 2).sum())
    feats = {"x_ori": f.data[0], "x_lf": before[0], **{k: v.data[0] for k, v in parts.items() if k != "m"}}
    return FreqReport(hf_b, hf_a, ac_energy(before), ac_energy(after), feats)
