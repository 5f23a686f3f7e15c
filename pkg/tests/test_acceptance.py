"""One check per acceptance criterion; each prints a PASS/FAIL line with the measured value."""

import json
import math
import re
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from test_gradcheck import CASES as BLOCK_CASES
from tpmamba import tensor as T
from tpmamba.config import ModelConfig, preset
from tpmamba.data import ImageFolder, bicubic_down
from tpmamba.freq import ac_energy, hfm, hfm_split
from tpmamba.gradcheck import max_rel_error, module_rel_error
from tpmamba.layouts import CARDINAL, Axis, Direction, Kind, build_cardinal_layout, build_window_layout, direction_schedule, gather, scatter
from tpmamba.model import REFERENCE_MACS_X4, REFERENCE_PARAMS, TPMambaSR, count_flops, count_params, load, save
from tpmamba.probes import gradient_support, tl_support_bound
from tpmamba.rng import SplitMix64
from tpmamba.ssm import selective_scan, selective_scan_reference, zoh_gain
from tpmamba.tensor import Tensor
from tpmamba.trainer import Trainer, TrainConfig, l1_loss, overfit

ROOT = Path(__file__).resolve().parents[1]
DESK_SUMMARY = ROOT / "artifacts" / "desk_x2" / "summary.json"
DESK_LOG = ROOT / "artifacts" / "desk_x2.log"


def test_criterion_01_parameter_fingerprint():
    t0 = time.perf_counter()
    n = {r: count_params(ModelConfig(scale=r)) for r in (2, 3, 4)}
    dt = time.perf_counter() - t0
    rel = {r: (n[r] - REFERENCE_PARAMS[r]) / REFERENCE_PARAMS[r] for r in n}
    d1, d2 = n[3] - n[2], n[4] - n[3]
    ok = all(abs(v) <= 0.05 for v in rel.values()) and 6000 <= d1 <= 8000 and 8000 <= d2 <= 10000 and dt < 1
    detail = ", ".join(f"x{r} {n[r]:,} ({100 * rel[r]:+.2f}%)" for r in n)
    assert record_criterion(1, ok, f"{detail}; deltas {d1:,} / {d2:,}; {dt:.2f}s")


def test_criterion_02_flop_audit():
    t0 = time.perf_counter()
    macs = count_flops(ModelConfig(scale=4), 720, 1280)
    dt = time.perf_counter() - t0
    rel = (macs - REFERENCE_MACS_X4) / REFERENCE_MACS_X4
    assert record_criterion(2, abs(rel) <= 0.15 and dt < 1, f"{macs / 1e9:.2f}G at x4 ({100 * rel:+.2f}%); {dt:.2f}s")


def test_criterion_03_scan_oracle():
    t0 = time.perf_counter()
    rng = SplitMix64(2024)
    worst = 0.0
    for _ in range(100):
        L, d, n = (1 + int(rng.integers(m, 1)[0]) for m in (64, 8, 8))
        x = rng.normal(L * d).reshape(L, d)
        delta = np.exp(rng.uniform(math.log(1e-3), 0.0, L * d)).reshape(L, d)
        A = -np.exp(rng.uniform(-2.0, 2.0, d * n)).reshape(d, n)
        B, C = rng.normal(L * n).reshape(L, n), rng.normal(L * n).reshape(L, n)
        D = rng.normal(d)
        got = selective_scan(x, delta, A, B, C, D).data
        worst = max(worst, float(np.abs(got - selective_scan_reference(x, delta, A, B, C, D)).max()))
    L, x0, alpha, beta, gamma = 40, 0.7, 0.8, 0.35, 1.3
    dl = -math.log(alpha)
    b = beta / float(zoh_gain(dl, -1.0))
    y = selective_scan(np.full((L, 1), x0), np.full((L, 1), dl), np.array([[-1.0]]), np.full((L, 1), b),
                       np.full((L, 1), gamma), np.zeros(1)).data[:, 0]
    k = np.arange(1, L + 1)
    geo = float(np.max(np.abs(y - gamma * beta * x0 * (1 - alpha ** k) / (1 - alpha))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and geo <= 1e-10 and dt < 10
    assert record_criterion(3, ok, f"100 scans max |err| {worst:.2e}; geometric {geo:.2e}; {dt:.1f}s")


def _operator_cases():
    g = np.random.default_rng(0)

    def r(*s, lo=-1.0, hi=1.0):
        return g.uniform(lo, hi, s)

    q, k, v = r(2, 2, 4, 3), r(2, 2, 4, 3), r(2, 2, 4, 3)
    return {
        "exp": (T.exp, [r(3, 5)]),
        "log": (T.log, [r(3, 5, lo=0.5, hi=2)]),
        "sigmoid": (T.sigmoid, [r(3, 5)]),
        "softplus": (T.softplus, [r(3, 5)]),
        "gelu": (T.gelu, [r(3, 5)]),
        "relu": (T.relu, [np.where(np.abs(a := r(3, 5)) < 0.05, 0.3, a)]),
        "absolute": (T.absolute, [np.where(np.abs(a := r(3, 5)) < 0.05, 0.3, a)]),
        "add": (T.add, [r(2, 3, 4), r(3, 1)]),
        "sub": (T.sub, [r(2, 3, 4), r(3, 1)]),
        "mul": (T.mul, [r(2, 3, 4), r(3, 1)]),
        "div": (T.div, [r(2, 3, 4), r(3, 1, lo=0.5, hi=1.5)]),
        "sum/mean": (lambda t: T.mean(T.tsum(t, axis=1), axis=0), [r(2, 3, 4)]),
        "reshape/transpose": (lambda t: T.transpose(T.reshape(t, (6, 4)), (1, 0)), [r(2, 3, 4)]),
        "slice/take": (lambda t: T.take(t[:, 1:], np.array([2, 0, 2, 3]), axis=2), [r(2, 3, 4)]),
        "split/concat": (lambda t: T.concat(T.split(t, 2, axis=1)[::-1], axis=1), [r(2, 4, 3)]),
        "matmul": (T.matmul, [r(2, 3, 4), r(4, 5)]),
        "linear": (T.linear, [r(2, 3, 4), r(4, 6), r(6)]),
        "layer_norm": (T.layer_norm, [r(2, 3, 4), r(4, lo=0.5, hi=1.5), r(4)]),
        "softmax": (T.softmax, [r(2, 3, 4)]),
        "conv2d": (lambda x, w, b: T.conv2d(x, w, b, padding=1), [r(2, 3, 6, 6), r(4, 3, 3, 3), r(4)]),
        "conv2d depthwise": (lambda x, w, b: T.conv2d(x, w, b, padding=1, groups=4), [r(2, 4, 6, 6), r(4, 1, 3, 3), r(4)]),
        "attention": (lambda a, b_, c, bias: T.attention(a, b_, c, bias, 0.5), [q, k, v, r(2, 4, 4)]),
        "avg_pool2": (T.avg_pool2, [r(2, 3, 6, 4)]),
        "bilinear_up2": (T.bilinear_up2, [r(2, 3, 3, 4)]),
        "pixel_shuffle": (lambda t: T.pixel_shuffle(t, 2), [r(1, 12, 3, 3)]),
        "pad_reflect/crop": (lambda t: T.crop(T.scale(T.pad_reflect(t, 3, 2), 2.0), 4, 5), [r(1, 2, 4, 5)]),
        "selective_scan": (selective_scan, [r(1, 6, 3), r(1, 6, 3, lo=0.05, hi=0.5), r(3, 2, lo=-2, hi=-0.5),
                                            r(1, 6, 2), r(1, 6, 2), r(3)]),
    }


def test_criterion_04_gradient_suite():
    t0 = time.perf_counter()
    errs = {}
    for name, (fn, arrays) in _operator_cases().items():
        errs[name] = max_rel_error(fn, arrays, max_points=48)
    for name, (make, call, shape) in BLOCK_CASES.items():
        assert max(shape) <= 16 and len(shape) <= 4 and shape[0] <= 2
        mod = make(SplitMix64(1))
        errs[name] = module_rel_error(mod, call(mod), np.random.default_rng(2).normal(size=shape), max_points=12)
    dt = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = errs[worst] < 1e-4 and dt < 300
    assert record_criterion(4, ok, f"{len(errs)} operators/blocks, worst {worst} {errs[worst]:.2e}; {dt:.0f}s")


def test_criterion_05_layout_suite():
    t0 = time.perf_counter()
    checked = 0
    for win in (2, 4, 8, 16, 32, 64):
        for h in range(win, 65, win):
            for w in range(win, 65, win):
                for axis in (Axis.HORIZONTAL, Axis.VERTICAL):
                    for d in (Direction.FORWARD, Direction.REVERSE):
                        lay = build_window_layout(h, w, win, axis, d, Kind.WIF)
                        n = h * w
                        assert np.array_equal(np.sort(lay.forward), np.arange(n))
                        assert np.array_equal(lay.inverse[lay.forward], np.arange(n))
                        rows, cols = np.divmod(lay.forward, w)
                        ids = ((rows // win) * (w // win) + cols // win).reshape(-1, win * win)
                        assert np.all(ids == ids[:, :1]) and len(np.unique(ids[:, 0])) == ids.shape[0]
                        checked += 1
    for h in range(1, 65, 3):
        for w in range(1, 65, 5):
            for name in CARDINAL:
                lay = build_cardinal_layout(h, w, name)
                assert np.array_equal(np.sort(lay.forward), np.arange(h * w))
                checked += 1
    x = np.random.default_rng(0).normal(size=(1, 3, 64, 32))
    for lay in (build_window_layout(64, 32, 16, Axis.VERTICAL, Direction.REVERSE), build_cardinal_layout(64, 32, "bl_tr")):
        assert np.array_equal(scatter(gather(Tensor(x), lay), lay, 64, 32).data, x)
    period = all(direction_schedule(b) == direction_schedule(b + 4) for b in range(16))
    covers = all(len({direction_schedule(b)[0] for b in range(s, s + 4)}) == 4 for s in range(16))
    dt = time.perf_counter() - t0
    ok = period and covers and dt < 30
    assert record_criterion(5, ok, f"{checked} layouts bijective/contiguous, round trips exact, period-4 coverage; {dt:.1f}s")


def test_criterion_06_receptive_field_progression():
    t0 = time.perf_counter()
    cfg = preset("toy", scale=2)
    assert cfg.groups == 2
    model = TPMambaSR(cfg, seed=0)
    maps = {st: gradient_support(model, st, 64, 0) for st in ("TL", "WSML", "GSML")}
    bound = tl_support_bound(cfg.window_attn, 1, 64)
    y0, y1, x0, x1 = maps["TL"].bounding_box()
    in_box = (y1 - y0) <= cfg.window_attn + 2 and (x1 - x0) <= cfg.window_attn + 2
    cov = {k: m.coverage for k, m in maps.items()}
    dt = time.perf_counter() - t0
    ok = cov["TL"] <= bound and in_box and cov["WSML"] > cov["TL"] and cov["GSML"] > 0.95 and dt < 120
    assert record_criterion(6, ok, f"coverage TL {100 * cov['TL']:.2f}% (bound {100 * bound:.2f}%), "
                                   f"WSML {100 * cov['WSML']:.2f}%, GSML {100 * cov['GSML']:.2f}%; {dt:.1f}s")


def test_criterion_07_hfm_identities():
    t0 = time.perf_counter()
    g = np.random.default_rng(0)
    exact = True
    for s in range(50):
        h2, w2 = 1 + s % 8, 1 + (s * 3) % 8
        f = g.integers(-(1 << 20), 1 << 20, (2, 3, 2 * h2, 2 * w2)) / float(1 << 20)
        hi, lo = hfm_split(Tensor(f))
        exact &= np.array_equal(hi.data + lo.data, f)
    zero = all(np.all(hfm(Tensor(np.full((1, 2, 8, 6), c))).data == 0.0) for c in (0.0, -3.25, 0.1, 1e3))
    x = np.arange(64)
    fast = np.ascontiguousarray(np.broadcast_to(np.cos(np.pi * x), (64, 64))[None, None])
    slow = np.ascontiguousarray(np.broadcast_to(np.sin(2 * np.pi * x / 32), (64, 64))[None, None])
    rf = float((hfm(Tensor(fast)).data ** 2).sum()) / ac_energy(fast)
    rs = float((hfm(Tensor(slow)).data ** 2).sum()) / ac_energy(slow)
    dt = time.perf_counter() - t0
    ok = exact and zero and rf >= 0.9 and rs <= 0.2 and dt < 10
    assert record_criterion(7, ok, f"reconstruction bit-exact {exact}, constants -> 0 {zero}, "
                                   f"period-2 ratio {rf:.3f} (>= 0.9), period-32 ratio {rs:.3f} (<= 0.2); {dt:.1f}s")


def _overfit_sample():
    data = pytest.importorskip("skimage.data")
    img = data.astronaut().astype(np.float64).transpose(2, 0, 1) / 255.0
    return np.ascontiguousarray(img[:, 100:164, 100:164])


def _desk_result():
    if not DESK_SUMMARY.is_file():
        return None, "desk run summary missing (run the training command from the README)"
    s = json.loads(DESK_SUMMARY.read_text())
    log = DESK_LOG.read_text() if DESK_LOG.is_file() else ""
    if "n_train" not in s:
        m = re.search(r"(\d+) training / (\d+) validation", log)
        s["n_train"] = int(m.group(1)) if m else 0
    if "elapsed_s" not in s:
        m = re.search(r"real\s+(\d+)m([\d.]+)s", log)
        s["elapsed_s"] = 60 * int(m.group(1)) + float(m.group(2)) if m else math.inf
    return s, s["n_train"]


def test_criterion_08_training_sanity():
    t0 = time.perf_counter()
    hr = _overfit_sample()
    losses = overfit(TPMambaSR(preset("toy", scale=2), seed=0), bicubic_down(hr, 2), hr, 1000, lr0=1e-3, target=0.01)
    fit_ok = losses[-1] < 0.01
    dt = time.perf_counter() - t0
    summary, n_train = _desk_result()
    if summary is None:
        desk_ok, desk = False, n_train
    else:
        gain = summary["final_psnr"] - summary["bicubic_psnr"]
        minutes = summary["elapsed_s"] / 60
        desk_ok = gain >= 0.3 and summary["iters"] >= 5000 and n_train >= 10 and minutes < 60
        desk = (f"desk run {summary['iters']} iters on {n_train} images in {minutes:.0f} min: "
                f"{summary['final_psnr']:.3f} dB vs bicubic {summary['bicubic_psnr']:.3f} dB "
                f"({gain:+.3f} dB, need +0.3)")
    ok = fit_ok and desk_ok
    assert record_criterion(8, ok, f"overfit L1 {losses[-1]:.4f} after {len(losses)} iters ({dt:.0f}s); {desk}")


def test_criterion_09_determinism_and_persistence(desk_root, tmp_path):
    t0 = time.perf_counter()
    train, val = ImageFolder(desk_root / "train"), ImageFolder(desk_root / "val")
    cfg = preset("toy", scale=2)
    tc = dict(batch=2, total_iters=4, patch=16, val_every=2, checkpoint_every=2, seed=5)
    runs = []
    for _ in range(2):
        tr = Trainer(TPMambaSR(cfg, 5), train, TrainConfig(**tc), val)
        tr.run()
        runs.append(tr)
    same_logs = runs[0].result.digest() == runs[1].result.digest()
    save(runs[0].model, tmp_path / "m.ckpt")
    back = load(tmp_path / "m.ckpt")
    a, b = runs[0].model.state_dict(), back.state_dict()
    round_trip = a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
    part = Trainer(TPMambaSR(cfg, 5), train, TrainConfig(**tc), val, out_dir=tmp_path / "run")
    part.run(until=2)
    resumed = Trainer.resume(tmp_path / "run" / "last.ckpt", train, val)
    resumed.run()
    c = resumed.model.state_dict()
    resume_ok = resumed.result.digest() == runs[0].result.digest() and all(np.array_equal(a[k], c[k]) for k in a)
    dt = time.perf_counter() - t0
    ok = same_logs and round_trip and resume_ok and dt < 300
    assert record_criterion(9, ok, f"identical logs {same_logs}, checkpoint bit-exact {round_trip}, "
                                   f"resume bit-exact {resume_ok}; {dt:.0f}s")


ABLATIONS = ("base", "model1", "model2", "model3", "model4", "case1", "case2", "case3", "case4", "case5",
             "order_glr", "order_rlg")


def test_criterion_10_ablation_reachability():
    t0 = time.perf_counter()
    x = np.random.default_rng(0).random((1, 3, 64, 64))
    params, outputs, finite = {}, {}, True
    for name in ABLATIONS:
        model = TPMambaSR(preset(name, scale=2), seed=0)
        y = model(x)
        l1_loss(y, np.zeros(y.shape)).backward()
        finite &= all(p.grad is not None and np.all(np.isfinite(p.grad)) for p in model.parameters())
        params[name] = model.num_params()
        outputs[name] = y.data.tobytes()
    distinct = len(set(outputs.values())) == len(ABLATIONS)
    dt = time.perf_counter() - t0
    ok = finite and distinct and dt < 300
    counts = ", ".join(f"{k} {v:,}" for k, v in params.items())
    assert record_criterion(10, ok, f"{len(ABLATIONS)} presets run fwd/bwd at 64x64, "
                                    f"{len(set(outputs.values()))} distinct outputs, "
                                    f"{len(set(params.values()))} distinct counts ({counts}); {dt:.0f}s")
