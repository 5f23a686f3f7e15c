"""Luma PSNR / SSIM with border shaving, plus a small tabular report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .data import rgb_to_ycbcr_y

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[0] == 3:
        return rgb_to_ycbcr_y(img)
    if img.ndim == 2:
        return img
    raise ValueError(f"expected [3, H, W] RGB or [H, W] luma, got {img.shape}")


def _prepare(sr, hr, shave: int) -> tuple[np.ndarray, np.ndarray]:
    sr, hr = np.asarray(sr, dtype=np.float64), np.asarray(hr, dtype=np.float64)
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: sr {sr.shape} vs hr {hr.shape}")
    ys, yh = _luma(sr), _luma(hr)
    if shave < 0 or 2 * shave >= min(ys.shape):
        raise ValueError(f"shave {shave} leaves nothing of a {ys.shape} image")
    if shave:
        ys, yh = ys[shave:-shave, shave:-shave], yh[shave:-shave, shave:-shave]
    return ys, yh


def psnr_y(sr, hr, shave: int = 0) -> float:
    """10 log10(1/MSE) on luma; identical images report the 100 dB cap."""
    ys, yh = _prepare(sr, hr, shave)
    mse = float(np.mean((ys - yh) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-position SSIM over every fully contained 11x11 Gaussian window."""
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim_y(sr, hr, shave: int = 0) -> float:
    ys, yh = _prepare(sr, hr, shave)
    if np.array_equal(ys, yh):
        return 1.0
    return float(ssim_map(ys, yh).mean())


# ---------------------------------------------------------------- reports
@dataclass
class MetricReport:
    scale: int
    shave: int
    rows: list[tuple[str, str, float, float]] = field(default_factory=list)

    def add(self, method: str, image: str, psnr: float, ssim: float) -> None:
        self.rows.append((method, image, float(psnr), float(ssim)))

    def methods(self) -> list[str]:
        return list(dict.fromkeys(m for m, *_ in self.rows))

    def mean(self, method: str) -> tuple[float, float]:
        sel = [(p, s) for m, _, p, s in self.rows if m == method]
        if not sel:
            raise KeyError(method)
        return float(np.mean([p for p, _ in sel])), float(np.mean([s for _, s in sel]))

    def to_text(self) -> str:
        lines = [f"scale x{self.scale}, shave {self.shave}, Y channel",
                 f"{'method':<10} {'image':<24} {'PSNR(dB)':>9} {'SSIM':>7}"]
        for m, img, p, s in self.rows:
            lines.append(f"{m:<10} {img:<24} {p:9.3f} {s:7.4f}")
        for m in self.methods():
            p, s = self.mean(m)
            lines.append(f"{m:<10} {'MEAN':<24} {p:9.3f} {s:7.4f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "image", "psnr", "ssim"])
        for m, img, p, s in self.rows:
            w.writerow([m, img, repr(p), repr(s)])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, scale: int = 0, shave: int = 0) -> "MetricReport":
        rep = cls(scale, shave)
        for row in csv.DictReader(io.StringIO(text)):
            rep.add(row["method"], row["image"], float(row["psnr"]), float(row["ssim"]))
        return rep
