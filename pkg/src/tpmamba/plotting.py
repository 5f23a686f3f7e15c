"""File-only figure rendering (Agg backend); nothing here opens a window."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    # fixed metadata keeps reruns byte-identical
    "svg.hashsalt": "tpmamba",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def save_gray_png(values: np.ndarray, path: str | Path) -> Path:
    """Min-max normalized 8-bit grayscale PNG of a 2-D array."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    norm = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.rint(norm * 255).astype(np.uint8), "L").save(path, format="PNG")
    return path


def plot_support_maps(maps, path: str | Path, log_scale: bool = True) -> Path:
    """One panel per stage: log10 gradient magnitude with the coverage in the title."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(maps), figsize=(2.6 * len(maps), 2.6), squeeze=False)
        for ax, sm in zip(axes[0], maps):
            img = np.log10(sm.magnitude + 1e-30) if log_scale else sm.normalized()
            if log_scale:
                img = np.maximum(img, np.log10(sm.threshold))
            ax.imshow(img, cmap="gray", interpolation="nearest")
            ax.set_title(f"{sm.stage}: {100 * sm.coverage:.1f}% above {sm.threshold:g}")
            ax.set_xticks([])
            ax.set_yticks([])
        return _save(fig, path)


def plot_training_curve(log: list[dict], path: str | Path, baseline_psnr: float | None = None) -> Path:
    it = [r["iter"] for r in log if r["loss"] is not None]
    loss = [r["loss"] for r in log if r["loss"] is not None]
    vit = [r["iter"] for r in log if r["psnr"] is not None]
    vps = [r["psnr"] for r in log if r["psnr"] is not None]
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 2.6))
        a1.plot(it, loss, color="k", lw=1)
        a1.set_xlabel("iteration")
        a1.set_ylabel("L1 (window mean)")
        a1.set_yscale("log")
        a2.plot(vit, vps, "o-", color="C0", ms=3, lw=1, label="network")
        if baseline_psnr is not None:
            a2.axhline(baseline_psnr, color="C3", ls="--", lw=1, label="bicubic")
        a2.set_xlabel("iteration")
        a2.set_ylabel("val PSNR-Y (dB)")
        a2.legend(frameon=False)
        return _save(fig, path)


def plot_param_breakdown(breakdown: dict[str, int], path: str | Path, reference: int | None = None) -> Path:
    names, counts = list(breakdown), list(breakdown.values())
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 0.22 * len(names) + 1.0))
        y = np.arange(len(names))
        ax.barh(y, counts, color="0.4")
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        total = sum(counts)
        title = f"total {total:,}"
        if reference:
            title += f" ({100 * (total - reference) / reference:+.1f}% vs {reference:,})"
        ax.set_title(title)
        ax.set_xlabel("parameters")
        return _save(fig, path)


def plot_eval(report, path: str | Path) -> Path:
    """Per-image PSNR grouped by method."""
    methods = report.methods()
    images = list(dict.fromkeys(img for _, img, _, _ in report.rows))
    vals = {(m, i): p for m, i, p, _ in report.rows}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.0, 0.9 * len(images) + 1.5), 2.6))
        width = 0.8 / max(len(methods), 1)
        x = np.arange(len(images))
        for k, m in enumerate(methods):
            ax.bar(x + k * width, [vals.get((m, i), np.nan) for i in images], width, label=m)
        ax.set_xticks(x + 0.4 - width / 2, images, rotation=30, ha="right")
        ax.set_ylabel("PSNR-Y (dB)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_freq(features: dict[str, np.ndarray], energies: dict[str, float], path: str | Path) -> Path:
    """Channel-mean feature maps of the refinement stages with their high-pass energy."""
    keys = list(features)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(keys), figsize=(1.9 * len(keys), 2.2), squeeze=False)
        for ax, k in zip(axes[0], keys):
            ax.imshow(features[k].mean(axis=0), cmap="gray", interpolation="nearest")
            title = k if k not in energies else f"{k}\nHF {energies[k]:.3g}"
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
        return _save(fig, path)
