"""Central finite-difference comparison for any function built from Tensor ops."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], seed: np.ndarray,
                 index: int, h: float = 1e-5, max_points: int | None = None,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """d <seed, fn(...)> / d arrays[index] by central differences.

    Returns (positions, values); with ``max_points`` only a random subset of
    coordinates is probed.
    """
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    n = target.size
    pos = np.arange(n)
    if max_points is not None and n > max_points:
        pos = np.sort((rng or np.random.default_rng(0)).choice(n, max_points, replace=False))
    flat = target.reshape(-1)
    vals = np.empty(pos.size)
    for k, i in enumerate(pos):
        orig = flat[i]
        flat[i] = orig + h
        up = float((fn(*[Tensor(a) for a in base]).data * seed).sum())
        flat[i] = orig - h
        down = float((fn(*[Tensor(a) for a in base]).data * seed).sum())
        flat[i] = orig
        vals[k] = (up - down) / (2 * h)
    return pos, vals


def max_rel_error(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5,
                  max_points: int | None = 64, seed: int = 0, floor: float = 1e-6) -> float:
    """Worst |analytic - numeric| / max(|analytic|, |numeric|, floor) over every input."""
    rng = np.random.default_rng(seed)
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*inputs)
    probe = rng.standard_normal(out.shape)
    out.backward(probe)
    worst = 0.0
    for i, t in enumerate(inputs):
        analytic = np.zeros(t.shape) if t.grad is None else t.grad
        pos, num = numeric_grad(fn, arrays, probe, i, h, max_points, rng)
        ana = analytic.reshape(-1)[pos]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


def module_rel_error(module, make_output: Callable[[Tensor], Tensor], x: np.ndarray, h: float = 1e-5,
                     max_points: int = 24, seed: int = 0, floor: float = 1e-6,
                     scale_floor: float = 1e-6) -> float:
    """Finite-difference check of a module's input and every parameter (sampled coordinates).

    The denominator never drops below ``floor`` or ``scale_floor`` times the largest
    analytic gradient, so entries that are structurally zero are compared against
    difference-quotient roundoff rather than against themselves.
    """
    rng = np.random.default_rng(seed)
    xt = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    module.zero_grad()
    out = make_output(xt)
    probe = rng.standard_normal(out.shape)
    out.backward(probe)
    targets = [("input", xt)] + list(module.named_parameters())
    analytic = {name: (np.zeros(t.shape) if t.grad is None else t.grad.copy()) for name, t in targets}

    floor = max(floor, scale_floor * max(float(np.abs(g).max(initial=0.0)) for g in analytic.values()))

    def objective() -> float:
        return float((make_output(Tensor(xt.data)).data * probe).sum())

    worst = 0.0
    for name, t in targets:
        flat = t.data.reshape(-1)
        n = flat.size
        pos = np.arange(n) if n <= max_points else rng.choice(n, max_points, replace=False)
        for i in pos:
            orig = flat[i]
            flat[i] = orig + h
            up = objective()
            flat[i] = orig - h
            down = objective()
            flat[i] = orig
            num = (up - down) / (2 * h)
            ana = analytic[name].reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    module.zero_grad()
    return worst
