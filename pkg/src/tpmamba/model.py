"""End-to-end network, parameter/FLOP audit, and the binary checkpoint format."""

from __future__ import annotations

import json
import math
import os
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import tensor as T
from .blocks import TpmGroup
from .config import ModelConfig
from .nn import Conv2d, Module
from .rng import SplitMix64
from .tensor import Tensor

# reported sizes of the reference network, by scale
REFERENCE_PARAMS = {2: 687_000, 3: 694_000, 4: 703_000}
REFERENCE_MACS_X4 = 63.0e9


class UpsampleHead(Module):
    """3x3 conv to 3*r^2 channels followed by one pixel shuffle."""

    def __init__(self, rng: SplitMix64, dim: int, scale: int):
        if scale not in (2, 3, 4):
            raise ValueError(f"unsupported scale {scale}")
        self.conv = Conv2d(rng, dim, 3 * scale * scale, 3)
        self.scale = scale

    def forward(self, f: Tensor) -> Tensor:
        return T.pixel_shuffle(self.conv(f), self.scale)

    def macs(self, h: int, w: int) -> int:
        return self.conv.macs(h, w)


def head_param_count(dim: int, scale: int) -> int:
    return dim * 3 * scale * scale * 9 + 3 * scale * scale


class TPMambaSR(Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        cfg = cfg or ModelConfig()
        rng = SplitMix64(seed)
        self.cfg = cfg
        self.seed = seed
        self.shallow = Conv2d(rng, 3, cfg.width, 3)
        self.groups = [TpmGroup(rng, cfg, g) for g in range(cfg.groups)]
        self.head = UpsampleHead(rng, cfg.width, cfg.scale)

    # ------------------------------------------------------------ forward
    def _pad(self, f: Tensor) -> Tensor:
        m = self.cfg.pad_multiple
        H, W = f.shape[-2:]
        return T.pad_reflect(f, -H % m, -W % m)

    def body(self, f_s: Tensor) -> Tensor:
        H, W = f_s.shape[-2:]
        h = self._pad(f_s)
        for group in self.groups:
            h = group(h)
        return T.crop(h, H, W)

    def forward(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected a [B, 3, H, W] image batch, got {x.shape}")
        if min(x.shape[-2:]) < 8:
            raise ValueError(f"input extents {x.shape[-2:]} below the 8x8 minimum")
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError("non-finite values in the input image")
        f_s = self.shallow(x)
        return self.head(T.add(self.body(f_s), f_s))

    def features(self, x, stage: str) -> Tensor:
        """Feature map after a given stage of the first group (cropped to the input size).

        ``stage`` is one of "shallow", "TL", "WSML", "GSML", "group", "body", "output".
        """
        x = T.as_tensor(x)
        f_s = self.shallow(x)
        if stage == "shallow":
            return f_s
        if stage == "output":
            return self.forward(x)
        if stage == "body":
            return T.add(self.body(f_s), f_s)
        H, W = f_s.shape[-2:]
        h = self._pad(f_s)
        if stage in ("TL", "WSML", "GSML"):
            return T.crop(self.groups[0](h, stop=stage), H, W)
        if stage == "group":
            return T.crop(self.groups[0](h), H, W)
        raise ValueError(f"unknown stage {stage!r}")

    # --------------------------------------------------------------- audit
    def param_breakdown(self) -> OrderedDict[str, int]:
        out: OrderedDict[str, int] = OrderedDict()
        out["shallow"] = self.shallow.num_params()
        for i, g in enumerate(self.groups):
            out[f"group{i}.blocks"] = sum(b.num_params() for b in g.blocks)
            out[f"group{i}.gsml"] = g.gsml.num_params()
            out[f"group{i}.ahfrm"] = g.ahfrm.num_params()
            out[f"group{i}.conv"] = g.conv.num_params()
        out["head"] = self.head.num_params()
        return out

    def macs(self, h: int, w: int) -> int:
        m = self.cfg.pad_multiple
        hp, wp = h + (-h % m), w + (-w % m)
        return (
            self.shallow.macs(h, w)
            + sum(g.macs(hp, wp) for g in self.groups)
            + self.head.macs(h, w)
        )


def count_params(cfg: ModelConfig | None = None) -> int:
    return TPMambaSR(cfg or ModelConfig()).num_params()


def count_flops(cfg: ModelConfig | None = None, out_h: int = 720, out_w: int = 1280) -> int:
    """Multiply-accumulate count for one image whose super-resolved size is out_h x out_w.

    Follows the lightweight-SR reporting convention where one MAC is one "FLOP".
    Per operator: conv = H*W*Cout*Cin/g*k*k; linear = tokens*in*out; window
    attention = 2*tokens*window^2*C for scores and weighted sum; selective scan =
    projections plus 3*L*channels*states for the recurrence and readout.
    Norms, activations, pooling and shuffles are not counted.
    """
    cfg = cfg or ModelConfig()
    h, w = math.ceil(out_h / cfg.scale), math.ceil(out_w / cfg.scale)
    return TPMambaSR(cfg).macs(h, w)


# ----------------------------------------------------------- checkpoint
MAGIC = b"TPMB"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated or mismatched checkpoint file."""


def write_checkpoint(path: str | os.PathLike, arrays: dict[str, np.ndarray], header: dict) -> None:
    """Write named float64 arrays plus a JSON header; atomic via temp-file rename."""
    head = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head, struct.pack("<I", len(arrays))]
    offset = 0
    for name, arr in arrays.items():
        nb = name.encode()
        parts.append(struct.pack("<HB", len(nb), arr.ndim) + nb)
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<Q", offset))
        offset += arr.size
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    try:
        version, hlen = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        pos = 12
        header = json.loads(blob[pos : pos + hlen].decode())
        pos += hlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        table = []
        for _ in range(count):
            nlen, ndim = struct.unpack_from("<HB", blob, pos)
            pos += 3
            name = blob[pos : pos + nlen].decode()
            pos += nlen
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            table.append((name, shape, offset))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt header ({exc})") from None
    payload = blob[pos:]
    total = sum(int(np.prod(s)) for _, s, _ in table)
    if len(payload) != 8 * total:
        raise CheckpointError(f"{path}: payload holds {len(payload)} bytes, table needs {8 * total}")
    flat = np.frombuffer(payload, dtype="<f8")
    arrays = {}
    for name, shape, offset in table:
        n = int(np.prod(shape))
        arrays[name] = flat[offset : offset + n].reshape(shape).astype(np.float64)
    return header, arrays


def save(model: TPMambaSR, path: str | os.PathLike, extra: dict[str, np.ndarray] | None = None,
         meta: dict | None = None) -> None:
    """Store parameters (and optional ``state/``-prefixed extras such as optimizer moments)."""
    arrays = dict(model.state_dict())
    for k, v in (extra or {}).items():
        arrays[f"state/{k}"] = v
    header = {"config": model.cfg.to_dict(), "seed": model.seed, "meta": meta or {}}
    write_checkpoint(path, arrays, header)


def load(path: str | os.PathLike, expect: ModelConfig | None = None,
         return_state: bool = False):
    """Rebuild a model from a checkpoint; rejects config mismatches and unknown names."""
    header, arrays = read_checkpoint(path)
    try:
        cfg = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid config snapshot ({exc})") from None
    if expect is not None and expect != cfg:
        diff = {k: (v, getattr(cfg, k)) for k, v in expect.to_dict().items() if cfg.to_dict()[k] != v}
        raise CheckpointError(f"{path}: config mismatch (requested, stored): {diff}")
    model = TPMambaSR(cfg, seed=int(header.get("seed", 0)))
    params = {k: v for k, v in arrays.items() if not k.startswith("state/")}
    try:
        model.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if return_state:
        state = {k[len("state/"):]: v for k, v in arrays.items() if k.startswith("state/")}
        return model, state, header.get("meta", {})
    return model
