"""Parameter containers and the basic layers shared by every block."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .rng import SplitMix64
from .tensor import Tensor


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def he_init(rng: SplitMix64, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> Tensor:
    """Zero-mean normal with std sqrt(2/fan_in), truncated at two sigma."""
    std = math.sqrt(2.0 / fan_in)
    n = int(np.prod(shape))
    return parameter(gain * rng.trunc_normal(n, std).reshape(shape))


class Module:
    """Attribute-walking parameter registry, in the spirit of torch.nn.Module."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        unknown = sorted(set(state) - set(own))
        missing = sorted(set(own) - set(state))
        if unknown or missing:
            raise KeyError(f"state mismatch: unknown={unknown[:5]} missing={missing[:5]}")
        for k, p in own.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: stored shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """Token-wise affine map over the last axis; weight stored as [in, out]."""

    def __init__(self, rng: SplitMix64, d_in: int, d_out: int, bias: bool = True, gain: float = 1.0):
        self.weight = he_init(rng, (d_in, d_out), d_in, gain)
        self.bias = parameter(np.zeros(d_out)) if bias else None
        self.d_in, self.d_out = d_in, d_out

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)

    def macs(self, tokens: int) -> int:
        return tokens * self.d_in * self.d_out


class Conv2d(Module):
    def __init__(
        self,
        rng: SplitMix64,
        c_in: int,
        c_out: int,
        k: int,
        groups: int = 1,
        bias: bool = True,
        gain: float = 1.0,
        padding_mode: str = "zeros",
    ):
        fan_in = (c_in // groups) * k * k
        self.weight = he_init(rng, (c_out, c_in // groups, k, k), fan_in, gain)
        self.bias = parameter(np.zeros(c_out)) if bias else None
        self.c_in, self.c_out, self.k, self.groups = c_in, c_out, k, groups
        if padding_mode not in ("zeros", "reflect"):
            raise ValueError(f"unknown padding mode {padding_mode!r}")
        self.padding_mode = padding_mode

    def forward(self, x: Tensor) -> Tensor:
        p = self.k // 2
        if self.padding_mode == "reflect" and p:
            H, W = x.shape[-2:]
            x = T.take(T.take(x, T.reflect_index(H, p, p), -2), T.reflect_index(W, p, p), -1)
            return T.conv2d(x, self.weight, self.bias, padding=0, groups=self.groups)
        return T.conv2d(x, self.weight, self.bias, padding=p, groups=self.groups)

    def macs(self, h: int, w: int) -> int:
        return h * w * self.c_out * (self.c_in // self.groups) * self.k * self.k


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


def channels_last(x: Tensor) -> Tensor:
    return T.transpose(x, (0, 2, 3, 1))


def channels_first(x: Tensor) -> Tensor:
    return T.transpose(x, (0, 3, 1, 2))
