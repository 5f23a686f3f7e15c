"""Architecture configuration and the named ablation presets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

STAGES = ("TL", "WSML", "GSML")
DEFAULT_ORDER = ("TL", "WSML", "GSML")


@dataclass(frozen=True)
class ModelConfig:
    groups: int = 4
    blocks_per_group: int = 4
    width: int = 48
    scale: int = 4
    window_attn: int = 16
    wif: int = 16
    wff: int = 32
    n_state: int = 8
    heads: int = 4
    ffn_ratio: int = 2
    stage_order: tuple[str, ...] = DEFAULT_ORDER
    window_scan: str = "MWSS"  # or "2DSS"
    global_scan: str = "MGSS"  # or "2DSS"
    use_hfm: bool = True
    hfca_source: str = "x_lf"  # or "deg_hf"
    shared_ffn: bool = True
    rel_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stage_order", tuple(self.stage_order))
        self.validate()

    def validate(self) -> None:
        c = self.width
        if c % 2 or c % 4 or c % self.heads:
            raise ValueError(f"width {c} must be even, divisible by 4 and by heads={self.heads}")
        if self.scale not in (2, 3, 4):
            raise ValueError(f"unsupported scale {self.scale}; expected 2, 3 or 4")
        if self.wif > self.wff:
            raise ValueError(f"wif={self.wif} must not exceed wff={self.wff}")
        if sorted(self.stage_order) != sorted(STAGES):
            raise ValueError(f"stage_order must be a permutation of {STAGES}, got {self.stage_order}")
        if self.stage_order[1] == "GSML":
            raise ValueError("GSML must open or close a group, not sit between TL and WSML")
        if self.window_scan not in ("MWSS", "2DSS") or self.global_scan not in ("MGSS", "2DSS"):
            raise ValueError(f"unknown scan variant {self.window_scan}/{self.global_scan}")
        if self.hfca_source not in ("x_lf", "deg_hf"):
            raise ValueError(f"unknown hfca_source {self.hfca_source!r}")
        if min(self.groups, self.blocks_per_group, self.n_state, self.ffn_ratio) < 1:
            raise ValueError("groups, blocks_per_group, n_state and ffn_ratio must be positive")

    @property
    def pad_multiple(self) -> int:
        sizes = [self.window_attn]
        if self.window_scan == "MWSS":
            sizes += [self.wif, self.wff]
        return math.lcm(*sizes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_order"] = list(self.stage_order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def load_config(path: str | Path) -> ModelConfig:
    """Read a JSON (or YAML) file whose keys mirror :class:`ModelConfig` fields."""
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    return ModelConfig.from_dict(data)


def save_config(cfg: ModelConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# desk-scale model used for training runs and gradient probes
TOY = dict(groups=2, blocks_per_group=1, width=24, heads=4)

PRESETS: dict[str, dict] = {
    "default": {},
    "toy": TOY,
    # component ablations
    "model1": dict(global_scan="2DSS"),
    "model2": dict(window_scan="2DSS"),
    "model3": dict(window_scan="2DSS", global_scan="2DSS"),
    "model4": dict(use_hfm=False),
    # window-size pairs
    "case1": dict(wif=16, wff=16),
    "case2": dict(wif=32, wff=32),
    "case3": dict(wif=64, wff=64),
    "case4": dict(wif=16, wff=64),
    "case5": dict(wif=32, wff=64),
    "base": dict(wif=16, wff=32),
    # stage orderings
    "order_lrg": dict(stage_order=("TL", "WSML", "GSML")),
    "order_glr": dict(stage_order=("GSML", "TL", "WSML")),
    "order_rlg": dict(stage_order=("WSML", "TL", "GSML")),
    # channel alignment driven by the degraded high-pass branch instead of the trunk output
    "hfca_deg": dict(hfca_source="deg_hf"),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ModelConfig(**{**PRESETS[name], **overrides})

