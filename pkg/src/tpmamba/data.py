"""Image I/O, luma conversion, antialiased bicubic degradation, patch sampling.

Images are float64 arrays shaped [3, H, W] with values in [0, 1].
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .rng import SplitMix64

CUBIC_A = -0.5


class DataError(ValueError):
    """Unreadable, malformed or unsuitable image data."""


# ------------------------------------------------------------------ PNG I/O
def load_png(path: str | Path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as [3, H, W] in [0, 1]; grayscale becomes three equal channels."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DataError(f"{path}: not a PNG file (found {im.format})")
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.repeat(arr[None], 3, axis=0)
            elif mode in ("L", "1", "P", "LA", "RGB", "RGBA"):
                rgb = im.convert("RGB") if mode != "RGB" else im
                arr = np.asarray(rgb, dtype=np.float64).transpose(2, 0, 1) / 255.0
            else:
                raise DataError(f"{path}: unsupported color type {mode}")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"{path}: cannot decode PNG ({exc})") from None
    return np.clip(arr, 0.0, 1.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[3, H, W] floats to [H, W, 3] bytes with round-half-even quantization."""
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(img: np.ndarray, path: str | Path) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[None], 3, axis=0)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DataError(f"expected a [3, H, W] image, got {img.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed encoder settings so reruns produce identical bytes
    Image.fromarray(to_uint8(img), "RGB").save(path, format="PNG", optimize=False, compress_level=6)


# ------------------------------------------------------------------- colour
def rgb_to_ycbcr_y(img: np.ndarray) -> np.ndarray:
    """Studio-swing BT.601 luma in [16/255, 235/255] for an RGB image in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    r, g, b = img[0], img[1], img[2]
    return (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0


# ---------------------------------------------------------------- resampling
def cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


@functools.lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] resampling operator with half-pixel centres and mirrored borders.

    Downscaling stretches the kernel by 1/scale so it also low-passes.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError(f"extents must be positive, got {n_in} -> {n_out}")
    s = n_out / n_in
    stretch = min(s, 1.0)
    width = 4.0 / stretch
    u = (np.arange(n_out) + 0.5) / s - 0.5
    left = np.floor(u - width / 2).astype(np.int64) + 1
    taps = int(math.ceil(width)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    w = stretch * cubic(stretch * (u[:, None] - idx))
    w /= w.sum(axis=1, keepdims=True)
    # symmetric (half-sample) mirroring of out-of-range taps
    period = 2 * n_in
    m = np.mod(idx, period)
    src = np.where(m < n_in, m, period - 1 - m)
    mat = np.zeros((n_out, n_in))
    for t in range(taps):
        np.add.at(mat, (np.arange(n_out), src[:, t]), w[:, t])
    return mat


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable a=-0.5 cubic resize of a [..., H, W] array."""
    img = np.asarray(img, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extents must be >= 1, got {out_h}x{out_w}")
    h, w = img.shape[-2:]
    if (h, w) == (out_h, out_w):
        return img.copy()
    return resize_matrix(h, out_h) @ img @ resize_matrix(w, out_w).T


def bicubic_down(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape[-2:]
    if h % r or w % r:
        raise DataError(f"{h}x{w} is not divisible by scale {r}")
    return bicubic_resize(img, h // r, w // r)


def bicubic_up(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape[-2:]
    return bicubic_resize(img, h * r, w * r)


def mod_crop(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape[-2:]
    return img[..., : h - h % r, : w - w % r]


# ----------------------------------------------------------------- sampling
def dihedral(img: np.ndarray, k: int) -> np.ndarray:
    """Element k in 0..7 of the square's symmetry group: k%4 quarter turns, then a flip if k >= 4."""
    out = np.rot90(img, k % 4, axes=(-2, -1))
    if k >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def dihedral_inverse(k: int) -> int:
    return k if k >= 4 else (4 - k) % 4


@dataclass
class PairedSample:
    hr: np.ndarray
    lr: np.ndarray
    source: str = ""
    offset: tuple[int, int] = (0, 0)
    transform: int = 0
    extra: dict = field(default_factory=dict)


def sample_patch(hr_img: np.ndarray, r: int, patch: int = 64, rng: SplitMix64 | None = None,
                 source: str = "") -> PairedSample:
    """Random (r*patch)^2 HR crop and its patch^2 bicubic degradation."""
    rng = rng if rng is not None else SplitMix64(0)
    size = r * patch
    h, w = hr_img.shape[-2:]
    if h < size or w < size:
        raise DataError(f"{source or 'image'} is {h}x{w}, smaller than the {size}x{size} crop")
    y = int(rng.integers(h - size + 1, 1)[0])
    x = int(rng.integers(w - size + 1, 1)[0])
    hr = np.ascontiguousarray(hr_img[:, y : y + size, x : x + size])
    return PairedSample(hr, bicubic_down(hr, r), source, (y, x))


def augment(sample: PairedSample, rng: SplitMix64) -> PairedSample:
    """Apply one uniformly chosen dihedral transform to both HR and LR."""
    k = int(rng.integers(8, 1)[0])
    return PairedSample(dihedral(sample.hr, k), dihedral(sample.lr, k), sample.source, sample.offset, k)


# ------------------------------------------------------------------ datasets
class ImageFolder:
    """``<root>/HR/*.png`` loaded eagerly; LR derived on demand."""

    def __init__(self, root: str | Path, files: list[Path] | None = None):
        self.root = Path(root)
        hr_dir = self.root / "HR"
        if files is None:
            if not hr_dir.is_dir():
                raise DataError(f"{self.root}: missing HR/ directory")
            files = sorted(hr_dir.glob("*.png"))
        if not files:
            raise DataError(f"{self.root}: no PNG images under HR/")
        self.files = list(files)
        self.images = [load_png(f) for f in self.files]

    def __len__(self) -> int:
        return len(self.images)

    def names(self) -> list[str]:
        return [f.stem for f in self.files]

    def pair(self, i: int, r: int) -> tuple[np.ndarray, np.ndarray]:
        hr = mod_crop(self.images[i], r)
        return hr, bicubic_down(hr, r)

    def cache_lr(self, r: int) -> Path:
        """Write 8-bit LR copies to ``<root>/LR_bicubic/X{r}/`` for inspection."""
        out = self.root / "LR_bicubic" / f"X{r}"
        for i, f in enumerate(self.files):
            _, lr = self.pair(i, r)
            save_png(lr, out / f"{f.stem}x{r}.png")
        return out


class PatchStream:
    """Endless seeded stream of augmented training batches."""

    def __init__(self, data: ImageFolder, r: int, patch: int, batch: int, seed: int):
        self.data, self.r, self.patch, self.batch = data, r, patch, batch
        self.rng = SplitMix64(seed)
        for name, img in zip(data.names(), data.images):
            if min(img.shape[-2:]) < r * patch:
                raise DataError(f"{name}: {img.shape[-2:]} is smaller than the {r * patch} HR crop")

    def next_batch(self) -> tuple[np.ndarray, np.ndarray]:
        hrs, lrs = [], []
        for _ in range(self.batch):
            i = int(self.rng.integers(len(self.data), 1)[0])
            s = augment(sample_patch(self.data.images[i], self.r, self.patch, self.rng), self.rng)
            hrs.append(s.hr)
            lrs.append(s.lr)
        return np.stack(lrs), np.stack(hrs)

    @property
    def state(self) -> int:
        return self.rng.state

    @state.setter
    def state(self, value: int) -> None:
        self.rng.state = int(value)


# --------------------------------------------------------- sample dataset
DESK_TRAIN = (
    "astronaut", "chelsea", "rocket", "hubble_deep_field", "immunohistochemistry",
    "retina", "camera", "moon", "coins", "clock", "brick", "grass", "gravel",
)
DESK_VAL = ("coffee",)


def _skimage_rgb(name: str) -> np.ndarray:
    from skimage import data as skdata

    arr = np.asarray(getattr(skdata, name)())
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    arr = arr[..., :3].astype(np.float64)
    return (arr / (65535.0 if arr.max() > 255 else 255.0)).transpose(2, 0, 1)


def write_desk_dataset(root: str | Path, max_side: int = 256) -> tuple[Path, Path]:
    """Populate ``<root>/train/HR`` and ``<root>/val/HR`` from scikit-image's bundled photos.

    Each image is centre-cropped to at most ``max_side`` per side so desk runs stay small.
    """
    root = Path(root)
    for split, names in (("train", DESK_TRAIN), ("val", DESK_VAL)):
        for name in names:
            img = _skimage_rgb(name)
            h, w = img.shape[-2:]
            ch, cw = min(h, max_side), min(w, max_side)
            y, x = (h - ch) // 2, (w - cw) // 2
            save_png(img[:, y : y + ch, x : x + cw], root / split / "HR" / f"{name}.png")
    return root / "train", root / "val"
