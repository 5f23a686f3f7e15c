"""L1 / Adam training with a halving step schedule, validation and resumable checkpoints."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .data import ImageFolder, PatchStream, bicubic_up
from .metrics import psnr_y, ssim_y
from .model import TPMambaSR, load, save
from .tensor import Tensor

FULL_SCHEDULE_ITERS = 600_000
LOG_COLUMNS = ("iter", "loss", "lr", "psnr", "ssim")


@dataclass
class TrainConfig:
    batch: int = 4
    total_iters: int = 5000
    lr0: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.99)
    eps: float = 1e-8
    milestones: tuple[float, ...] = (0.5, 0.75, 0.875, 23 / 24)
    seed: int = 0
    patch: int = 32
    val_every: int = 500
    checkpoint_every: int = 1000

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.milestones = tuple(self.milestones)
        ms = self.milestones
        if any(not 0.0 < m < 1.0 for m in ms) or any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing inside (0, 1), got {ms}")
        if self.batch < 1 or self.total_iters < 0 or self.patch < 1:
            raise ValueError("batch and patch must be positive, total_iters non-negative")

    def milestone_iters(self) -> list[int]:
        return [round(m * self.total_iters) for m in self.milestones]


def lr_schedule(it: int, cfg: TrainConfig) -> float:
    """lr0 halved once for every milestone already reached."""
    passed = sum(1 for m in cfg.milestone_iters() if it >= m)
    return cfg.lr0 * 0.5 ** passed


def l1_loss(sr: Tensor, hr) -> Tensor:
    hr = T.as_tensor(hr)
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {sr.shape} vs {hr.shape}")
    return T.mean(T.absolute(T.sub(sr, hr)))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: list[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: list[Tensor], state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.99), eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; parameters without a gradient are skipped."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ------------------------------------------------------------ validation
def super_resolve(model: TPMambaSR, lr_img: np.ndarray) -> np.ndarray:
    """[3, h, w] -> [3, r*h, r*w], clipped to [0, 1]."""
    with T.no_grad():
        out = model(lr_img[None]).data[0]
    return np.clip(out, 0.0, 1.0)


def validate(model: TPMambaSR, data: ImageFolder) -> tuple[float, float]:
    """Mean luma PSNR / SSIM over the validation images with shave = scale."""
    r = model.cfg.scale
    ps, ss = [], []
    for i in range(len(data)):
        hr, lr = data.pair(i, r)
        sr = super_resolve(model, lr)
        ps.append(psnr_y(sr, hr, r))
        ss.append(ssim_y(sr, hr, r))
    return float(np.mean(ps)), float(np.mean(ss))


def bicubic_baseline(data: ImageFolder, r: int) -> tuple[float, float]:
    ps, ss = [], []
    for i in range(len(data)):
        hr, lr = data.pair(i, r)
        up = np.clip(bicubic_up(lr, r), 0.0, 1.0)
        ps.append(psnr_y(up, hr, r))
        ss.append(ssim_y(up, hr, r))
    return float(np.mean(ps)), float(np.mean(ss))


# ------------------------------------------------------------------ loop
@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    best_psnr: float = -math.inf
    best_iter: int = -1
    checkpoints: list[Path] = field(default_factory=list)

    def digest(self) -> str:
        blob = json.dumps(self.log, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _fmt(row: dict) -> str:
    def f(v, spec):
        return "-" if v is None else format(v, spec)

    return (f"iter {row['iter']:>7d}  loss {f(row['loss'], '.6f')}  lr {row['lr']:.3e}"
            f"  psnr {f(row['psnr'], '.3f')}  ssim {f(row['ssim'], '.4f')}")


class Trainer:
    """Owns model, optimizer state and data stream; every piece is checkpointed."""

    def __init__(self, model: TPMambaSR, train_data: ImageFolder, cfg: TrainConfig,
                 val_data: ImageFolder | None = None, out_dir: str | Path | None = None,
                 echo: Callable[[str], None] | None = None):
        self.model, self.cfg = model, cfg
        self.val_data = val_data
        self.stream = PatchStream(train_data, model.cfg.scale, cfg.patch, cfg.batch, cfg.seed)
        self.params = model.parameters()
        self.adam = AdamState.zeros_like(self.params)
        self.iter = 0
        self.result = TrainResult()
        self.out_dir = Path(out_dir) if out_dir else None
        self.echo = echo

    # ---------------------------------------------------------- plumbing
    def _log(self, row: dict) -> None:
        self.result.log.append(row)
        line = _fmt(row)
        if self.echo:
            self.echo(line)
        if self.out_dir:
            with open(self.out_dir / "train_log.txt", "a") as fh:
                fh.write(line + "\n")
            path = self.out_dir / "train_log.csv"
            new = not path.exists()
            with open(path, "a", newline="") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(LOG_COLUMNS)
                w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                            for c in LOG_COLUMNS])

    def _state_arrays(self) -> dict[str, np.ndarray]:
        names = [n for n, _ in self.model.named_parameters()]
        out = {f"adam.m/{n}": m for n, m in zip(names, self.adam.m)}
        out.update({f"adam.v/{n}": v for n, v in zip(names, self.adam.v)})
        return out

    def _meta(self) -> dict:
        return {
            "iter": self.iter,
            "adam_step": self.adam.step,
            "stream_state": str(self.stream.state),
            "train": asdict(self.cfg),
            "best_psnr": None if math.isinf(self.result.best_psnr) else self.result.best_psnr,
            "best_iter": self.result.best_iter,
            "log": self.result.log,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        save(self.model, path, extra=self._state_arrays(), meta=self._meta())
        self.result.checkpoints.append(path)
        return path

    @classmethod
    def resume(cls, path: str | Path, train_data: ImageFolder, val_data: ImageFolder | None = None,
               out_dir: str | Path | None = None, total_iters: int | None = None,
               echo: Callable[[str], None] | None = None) -> "Trainer":
        model, state, meta = load(path, return_state=True)
        tc = dict(meta["train"])
        if total_iters is not None:
            tc["total_iters"] = total_iters
        tr = cls(model, train_data, TrainConfig(**tc), val_data, out_dir, echo)
        names = [n for n, _ in model.named_parameters()]
        tr.adam.m = [np.array(state[f"adam.m/{n}"]) for n in names]
        tr.adam.v = [np.array(state[f"adam.v/{n}"]) for n in names]
        tr.adam.step = int(meta["adam_step"])
        tr.iter = int(meta["iter"])
        tr.stream.state = int(meta["stream_state"])
        tr.result.log = list(meta["log"])
        tr.result.best_psnr = -math.inf if meta["best_psnr"] is None else float(meta["best_psnr"])
        tr.result.best_iter = int(meta["best_iter"])
        return tr

    # ------------------------------------------------------------- steps
    def step(self) -> float:
        lr_b, hr_b = self.stream.next_batch()
        self.model.zero_grad()
        loss = l1_loss(self.model(lr_b), hr_b)
        loss.backward()
        if not math.isfinite(loss.item()):
            raise FloatingPointError(f"non-finite loss at iteration {self.iter}")
        adam_step(self.params, self.adam, lr_schedule(self.iter, self.cfg), self.cfg.betas, self.cfg.eps)
        self.iter += 1
        return loss.item()

    def _validate_and_log(self, loss: float | None) -> None:
        psnr = ssim = None
        if self.val_data is not None:
            psnr, ssim = validate(self.model, self.val_data)
            if psnr > self.result.best_psnr:
                self.result.best_psnr, self.result.best_iter = psnr, self.iter
                if self.out_dir:
                    self.save(self.out_dir / "best.ckpt")
        lr = lr_schedule(min(self.iter, max(self.cfg.total_iters - 1, 0)), self.cfg)
        self._log({"iter": self.iter, "loss": loss, "lr": lr, "psnr": psnr, "ssim": ssim})

    def run(self, until: int | None = None) -> TrainResult:
        """Train up to ``until`` (default: total_iters) iterations, validating at the cadence."""
        until = self.cfg.total_iters if until is None else min(until, self.cfg.total_iters)
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.iter == 0 and not self.result.log:
            self._validate_and_log(None)
        window: list[float] = []
        while self.iter < until:
            window.append(self.step())
            if self.iter % self.cfg.val_every == 0 or self.iter == self.cfg.total_iters:
                self._validate_and_log(float(np.mean(window)))
                window = []
            if self.out_dir and (self.iter % self.cfg.checkpoint_every == 0 or self.iter == self.cfg.total_iters):
                self.save(self.out_dir / "last.ckpt")
        return self.result


def train_loop(model: TPMambaSR, train_data: ImageFolder, cfg: TrainConfig,
               val_data: ImageFolder | None = None, out_dir: str | Path | None = None,
               echo: Callable[[str], None] | None = None) -> TrainResult:
    return Trainer(model, train_data, cfg, val_data, out_dir, echo).run()


def overfit(model: TPMambaSR, lr_img: np.ndarray, hr_img: np.ndarray, iters: int, lr0: float = 2e-4,
            target: float | None = None) -> list[float]:
    """Fit one fixed pair with constant-lr Adam; returns the per-iteration losses."""
    params = model.parameters()
    state = AdamState.zeros_like(params)
    losses = []
    x, y = lr_img[None], hr_img[None]
    for _ in range(iters):
        model.zero_grad()
        loss = l1_loss(model(x), y)
        loss.backward()
        adam_step(params, state, lr0)
        losses.append(loss.item())
        if target is not None and losses[-1] < target:
            break
    return losses
