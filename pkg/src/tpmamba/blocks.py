"""Composite layers: gated SSM mixers, TL/WSML/GSML layers, T-WSM blocks, T-PM groups."""

from __future__ import annotations

from . import tensor as T
from .attention import WindowAttention
from .config import ModelConfig
from .freq import AHFRM
from .layouts import (
    CARDINAL,
    Kind,
    build_cardinal_layout,
    build_window_layout,
    direction_schedule,
    gather,
    scatter,
)
from .nn import Conv2d, LayerNorm, Linear, Module, channels_first, channels_last
from .rng import SplitMix64
from .ssm import SsmParams
from .tensor import ShapeError, Tensor

OUT_GAIN = 0.1


def _scan_image(x: Tensor, layout, ssm: SsmParams) -> Tensor:
    _, _, H, W = x.shape
    return scatter(ssm(gather(x, layout)), layout, H, W)


# ------------------------------------------------------------------ scans
class MWSS(Module):
    """Channel halves scanned with window-major WIF and WFF flattens, then re-joined."""

    def __init__(self, rng: SplitMix64, dim: int, wif: int, wff: int, n_state: int, block_index: int):
        if dim % 2:
            raise ShapeError(f"MWSS needs an even channel count, got {dim}")
        self.ssm_i = SsmParams(rng, dim // 2, n_state)
        self.ssm_f = SsmParams(rng, dim // 2, n_state)
        self.wif, self.wff = wif, wff
        self.block_index = block_index

    def layouts(self, h: int, w: int):
        (ax_i, dir_i), (ax_f, dir_f) = direction_schedule(self.block_index)
        for win in (self.wif, self.wff):
            if h % win or w % win:
                raise ShapeError(f"{h}x{w} is not a multiple of scan window {win}")
        return (
            build_window_layout(h, w, self.wif, ax_i, dir_i, Kind.WIF),
            build_window_layout(h, w, self.wff, ax_f, dir_f, Kind.WFF),
        )

    def forward(self, x: Tensor) -> Tensor:
        _, _, H, W = x.shape
        lay_i, lay_f = self.layouts(H, W)
        x_i, x_f = T.split(x, 2, axis=1)
        return T.concat([_scan_image(x_i, lay_i, self.ssm_i), _scan_image(x_f, lay_f, self.ssm_f)], axis=1)

    def macs(self, h: int, w: int) -> int:
        return self.ssm_i.macs(h * w) + self.ssm_f.macs(h * w)


class MGSS(Module):
    """Four channel quarters, each raster-scanned from a different corner."""

    def __init__(self, rng: SplitMix64, dim: int, n_state: int):
        if dim % 4:
            raise ShapeError(f"MGSS needs channels divisible by 4, got {dim}")
        self.ssms = [SsmParams(rng, dim // 4, n_state) for _ in CARDINAL]

    def forward(self, x: Tensor) -> Tensor:
        _, _, H, W = x.shape
        parts = T.split(x, 4, axis=1)
        outs = [
            _scan_image(p, build_cardinal_layout(H, W, name), ssm)
            for p, name, ssm in zip(parts, CARDINAL, self.ssms)
        ]
        return T.concat(outs, axis=1)

    def macs(self, h: int, w: int) -> int:
        return sum(s.macs(h * w) for s in self.ssms)


class TwoDSS(Module):
    """Full-width copies scanned along all four cardinal orders and summed."""

    def __init__(self, rng: SplitMix64, dim: int, n_state: int):
        self.ssms = [SsmParams(rng, dim, n_state) for _ in CARDINAL]

    def forward(self, x: Tensor) -> Tensor:
        _, _, H, W = x.shape
        out = None
        for name, ssm in zip(CARDINAL, self.ssms):
            y = _scan_image(x, build_cardinal_layout(H, W, name), ssm)
            out = y if out is None else T.add(out, y)
        return out

    def macs(self, h: int, w: int) -> int:
        return sum(s.macs(h * w) for s in self.ssms)


# ----------------------------------------------------------------- mixers
class GatedSsm(Module):
    """Linear -> x * sigmoid(DWConv(x)) -> scan -> LN -> Linear (WISSM / MGSSM)."""

    def __init__(self, rng: SplitMix64, dim: int, scan: Module):
        self.in_proj = Linear(rng, dim, dim)
        self.gate_dwconv = Conv2d(rng, dim, dim, 3, groups=dim)
        self.scan = scan
        self.out_norm = LayerNorm(dim)
        self.out_proj = Linear(rng, dim, dim, gain=OUT_GAIN)

    def gated(self, x: Tensor) -> Tensor:
        xp = channels_first(self.in_proj(channels_last(x)))
        return T.mul(xp, T.sigmoid(self.gate_dwconv(xp)))

    def forward(self, x: Tensor) -> Tensor:
        xs = self.scan(self.gated(x))
        return channels_first(self.out_proj(self.out_norm(channels_last(xs))))

    def macs(self, h: int, w: int) -> int:
        t = h * w
        return self.in_proj.macs(t) + self.gate_dwconv.macs(h, w) + self.scan.macs(h, w) + self.out_proj.macs(t)


class WindowMixer(Module):
    """Window MHSA over an NCHW map."""

    def __init__(self, rng: SplitMix64, dim: int, window: int, heads: int, rel_bias: bool):
        self.attn = WindowAttention(rng, dim, window, heads, rel_bias=rel_bias, out_gain=OUT_GAIN)

    def forward(self, x: Tensor) -> Tensor:
        return self.attn.forward_image(x)

    def macs(self, h: int, w: int) -> int:
        return self.attn.macs(h, w)


class FFN(Module):
    def __init__(self, rng: SplitMix64, dim: int, ratio: int):
        self.norm = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, ratio * dim)
        self.fc2 = Linear(rng, ratio * dim, dim, gain=OUT_GAIN)

    def forward(self, x: Tensor) -> Tensor:
        t = channels_last(x)
        return T.add(x, channels_first(self.fc2(T.gelu(self.fc1(self.norm(t))))))

    def macs(self, h: int, w: int) -> int:
        return self.fc1.macs(h * w) + self.fc2.macs(h * w)


class Layer(Module):
    """Pre-norm residual mixer, optionally followed by its own residual FFN."""

    def __init__(self, tag: str, norm: LayerNorm, mixer: Module, ffn: FFN | None):
        self.tag = tag
        self.norm = norm
        self.mixer = mixer
        self.ffn = ffn

    def forward(self, x: Tensor) -> Tensor:
        x = T.add(x, self.mixer(channels_first(self.norm(channels_last(x)))))
        return self.ffn(x) if self.ffn is not None else x

    def macs(self, h: int, w: int) -> int:
        return self.mixer.macs(h, w) + (self.ffn.macs(h, w) if self.ffn is not None else 0)


def make_layer(rng: SplitMix64, tag: str, cfg: ModelConfig, block_index: int, with_ffn: bool) -> Layer:
    c = cfg.width
    if tag == "TL":
        mixer = WindowMixer(rng, c, cfg.window_attn, cfg.heads, cfg.rel_bias)
    elif tag == "WSML":
        if cfg.window_scan == "MWSS":
            scan = MWSS(rng, c, cfg.wif, cfg.wff, cfg.n_state, block_index)
        else:
            scan = TwoDSS(rng, c, cfg.n_state)
        mixer = GatedSsm(rng, c, scan)
    elif tag == "GSML":
        scan = MGSS(rng, c, cfg.n_state) if cfg.global_scan == "MGSS" else TwoDSS(rng, c, cfg.n_state)
        mixer = GatedSsm(rng, c, scan)
    else:
        raise ValueError(f"unknown stage tag {tag!r}")
    ffn = FFN(rng, c, cfg.ffn_ratio) if with_ffn else None
    return Layer(tag, LayerNorm(c), mixer, ffn)


# ----------------------------------------------------------- block / group
class TwsmBlock(Module):
    """TL then WSML (or the configured order), closing with the block FFN."""

    def __init__(self, rng: SplitMix64, cfg: ModelConfig, block_index: int):
        order = [t for t in cfg.stage_order if t != "GSML"]
        self.layers = [
            make_layer(rng, tag, cfg, block_index, with_ffn=(not cfg.shared_ffn) or i == len(order) - 1)
            for i, tag in enumerate(order)
        ]
        self.block_index = block_index

    def forward(self, x: Tensor, stop: str | None = None) -> Tensor:
        for layer in self.layers:
            x = layer(x)
            if stop == layer.tag:
                break
        return x

    def macs(self, h: int, w: int) -> int:
        return sum(layer.macs(h, w) for layer in self.layers)


class TpmGroup(Module):
    """N T-WSM blocks and one GSML, then AHFRM against the group input, a 3x3 conv and a residual."""

    def __init__(self, rng: SplitMix64, cfg: ModelConfig, group_index: int):
        n = cfg.blocks_per_group
        self.blocks = [TwsmBlock(rng, cfg, group_index * n + i) for i in range(n)]
        self.gsml = make_layer(rng, "GSML", cfg, group_index, with_ffn=True)
        self.gsml_first = cfg.stage_order[0] == "GSML"
        self.ahfrm = AHFRM(rng, cfg.width, cfg.use_hfm, cfg.hfca_source)
        self.conv = Conv2d(rng, cfg.width, cfg.width, 3, gain=OUT_GAIN)

    def trunk(self, x: Tensor, stop: str | None = None) -> Tensor:
        """Blocks plus GSML; with ``stop`` in {"TL", "WSML", "GSML"} returns the feature right
        after that stage's first occurrence."""
        h = x
        if self.gsml_first:
            h = self.gsml(h)
            if stop == "GSML":
                return h
        for i, block in enumerate(self.blocks):
            if stop in ("TL", "WSML") and i == 0:
                return block(h, stop=stop)
            h = block(h)
        if not self.gsml_first:
            h = self.gsml(h)
        return h

    def forward(self, x: Tensor, stop: str | None = None) -> Tensor:
        h = self.trunk(x, stop)
        if stop is not None:
            return h
        return T.add(x, self.conv(self.ahfrm(x, h)))

    def macs(self, h: int, w: int) -> int:
        return (
            sum(b.macs(h, w) for b in self.blocks)
            + self.gsml.macs(h, w)
            + self.ahfrm.macs(h, w)
            + self.conv.macs(h, w)
        )
