"""Progressive window-attention / window-scan / global-scan super-resolution at desk scale."""

from .config import ModelConfig, PRESETS, load_config, preset, save_config
from .model import TPMambaSR, count_flops, count_params, load, save
from .tensor import Tensor, no_grad

__all__ = [
    "ModelConfig", "PRESETS", "TPMambaSR", "Tensor", "count_flops", "count_params",
    "load", "load_config", "no_grad", "preset", "save", "save_config",
]
__version__ = "0.1.0"
