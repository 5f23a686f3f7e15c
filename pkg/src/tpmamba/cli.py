"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/checkpoint error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as C
from .data import DataError, ImageFolder, bicubic_down, bicubic_up, load_png, mod_crop, save_png, write_desk_dataset
from .metrics import MetricReport, psnr_y, ssim_y
from .model import REFERENCE_MACS_X4, REFERENCE_PARAMS, CheckpointError, TPMambaSR, count_flops, load

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _echo(msg: str = "") -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------- config
def resolve_config(args, default_preset: str = "default") -> C.ModelConfig:
    """Preset first, then keys from --config, then an explicit --scale."""
    name = args.preset or default_preset
    if name not in C.PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(C.PRESETS))}")
    fields = dict(C.PRESETS[name])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file {path} not found")
        try:
            text = path.read_text()
            if path.suffix in (".yaml", ".yml"):
                import yaml

                extra = yaml.safe_load(text)
            else:
                extra = json.loads(text)
        except Exception as exc:  # noqa: BLE001 - any parse failure is a data error
            raise DataError(f"{path}: cannot parse config ({exc})") from None
        fields.update(extra or {})
    if getattr(args, "scale", None):
        fields["scale"] = args.scale
    try:
        return C.ModelConfig.from_dict(fields)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid configuration: {exc}") from None


def _load_ckpt(path: str, args) -> TPMambaSR:
    if not Path(path).is_file():
        raise DataError(f"checkpoint {path} not found")
    expect = resolve_config(args) if args.config or args.preset else None
    return load(path, expect=expect)


# ------------------------------------------------------------- commands
def cmd_train(args) -> int:
    from .plotting import plot_training_curve
    from .trainer import TrainConfig, Trainer, bicubic_baseline

    cfg = resolve_config(args, default_preset="toy")
    data = Path(args.data)
    if args.sample_data and not data.exists():
        _echo(f"writing sample dataset to {data}")
        write_desk_dataset(data)
    if not data.exists():
        raise DataError(f"data directory {data} not found")
    train_root = data / "train" if (data / "train" / "HR").is_dir() else data
    val_root = Path(args.val) if args.val else (data / "val" if (data / "val" / "HR").is_dir() else None)
    train_set = ImageFolder(train_root)
    if val_root is None:
        if len(train_set) < 2:
            raise DataError("need a validation directory or at least two training images")
        val_set = ImageFolder(train_root, train_set.files[-1:])
        train_set = ImageFolder(train_root, train_set.files[:-1])
    else:
        val_set = ImageFolder(val_root)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("train_log.txt", "train_log.csv"):
        if not args.resume:
            (out / stale).unlink(missing_ok=True)
    tc = TrainConfig(batch=args.batch, total_iters=args.iters, seed=args.seed, patch=args.patch,
                     val_every=args.val_every, checkpoint_every=args.checkpoint_every)
    if args.resume:
        tr = Trainer.resume(args.resume, train_set, val_set, out, total_iters=args.iters, echo=_echo)
    else:
        model = TPMambaSR(cfg, seed=args.seed)
        tr = Trainer(model, train_set, tc, val_set, out, echo=_echo)
    _echo(f"{len(train_set)} training / {len(val_set)} validation images, "
          f"{tr.model.num_params():,} parameters, x{tr.model.cfg.scale}")
    t_start = time.perf_counter()
    try:
        res = tr.run()
    except FloatingPointError as exc:
        raise NumericFailure(str(exc)) from None
    if not res.checkpoints or tr.iter == 0:
        tr.save(out / "last.ckpt")
    base_psnr, base_ssim = bicubic_baseline(val_set, tr.model.cfg.scale)
    last = [r for r in res.log if r["psnr"] is not None][-1]
    summary = {
        "iters": tr.iter, "final_psnr": last["psnr"], "final_ssim": last["ssim"],
        "best_psnr": res.best_psnr, "best_iter": res.best_iter,
        "bicubic_psnr": base_psnr, "bicubic_ssim": base_ssim,
        "gain_db": last["psnr"] - base_psnr, "log_digest": res.digest(),
        "n_train": len(train_set), "n_val": len(val_set), "elapsed_s": round(time.perf_counter() - t_start, 1),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    plot_training_curve(res.log, out / "training_curve.png", base_psnr)
    _echo(f"final validation: PSNR-Y {last['psnr']:.3f} dB, SSIM {last['ssim']:.4f} "
          f"(bicubic {base_psnr:.3f} dB / {base_ssim:.4f}, gain {summary['gain_db']:+.3f} dB)")
    _echo(f"log digest {summary['log_digest']}")
    return EXIT_OK


def cmd_sr(args) -> int:
    from .trainer import super_resolve

    model = _load_ckpt(args.ckpt, args)
    img = load_png(args.inp)
    try:
        out = super_resolve(model, img)
    except FloatingPointError as exc:
        raise NumericFailure(str(exc)) from None
    save_png(out, args.out)
    _echo(f"{img.shape[2]}x{img.shape[1]} -> {out.shape[2]}x{out.shape[1]} written to {args.out}")
    return EXIT_OK


def _hr_files(hr_dir: Path) -> list[Path]:
    if not hr_dir.is_dir():
        raise DataError(f"{hr_dir} is not a directory")
    root = hr_dir / "HR" if (hr_dir / "HR").is_dir() else hr_dir
    files = sorted(root.glob("*.png"))
    if not files:
        raise DataError(f"{hr_dir}: no PNG images")
    return files


def cmd_eval(args) -> int:
    from .plotting import plot_eval
    from .trainer import super_resolve

    if not args.ckpt and not args.bypass:
        raise UsageError("eval needs --ckpt unless --bypass is given")
    files = _hr_files(Path(args.hr_dir))
    model = None if args.bypass else _load_ckpt(args.ckpt, args)
    r = model.cfg.scale if model is not None else (args.scale or 2)
    if args.scale and model is not None and args.scale != r:
        raise DataError(f"--scale {args.scale} disagrees with the checkpoint's x{r}")
    shave = r if args.shave is None else args.shave
    rep = MetricReport(r, shave)
    for f in files:
        hr = mod_crop(load_png(f), r)
        lr = bicubic_down(hr, r)
        up = np.clip(bicubic_up(lr, r), 0.0, 1.0)
        rep.add("bicubic", f.stem, psnr_y(up, hr, shave), ssim_y(up, hr, shave))
        if args.bypass:
            rep.add("identity", f.stem, psnr_y(hr, hr, shave), ssim_y(hr, hr, shave))
        else:
            try:
                sr = super_resolve(model, lr)
            except FloatingPointError as exc:
                raise NumericFailure(f"{f.name}: {exc}") from None
            rep.add("network", f.stem, psnr_y(sr, hr, shave), ssim_y(sr, hr, shave))
    _echo(rep.to_text())
    if args.csv:
        rep.write_csv(args.csv)
    if args.plot:
        plot_eval(rep, args.plot)
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .plotting import plot_param_breakdown

    cfg = resolve_config(args)
    rows = []
    for r in (2, 3, 4):
        m = TPMambaSR(cfg.with_(scale=r))
        rows.append((r, m.num_params(), REFERENCE_PARAMS[r], m))
    _echo(f"{'scale':>5} {'params':>10} {'reference':>10} {'diff':>7}")
    for r, n, ref, _ in rows:
        _echo(f"   x{r} {n:>10,} {ref:>10,} {100 * (n - ref) / ref:+6.2f}%")
    _echo(f"delta x3-x2 {rows[1][1] - rows[0][1]:,}  x4-x3 {rows[2][1] - rows[1][1]:,}")
    model = next(m for r, _, _, m in rows if r == cfg.scale)
    _echo(f"\nper-module breakdown at x{cfg.scale}:")
    bd = model.param_breakdown()
    for k, v in bd.items():
        _echo(f"  {k:<16} {v:>9,}")
    flops = count_flops(cfg)
    _echo(f"\nMACs for a 1280x720 output at x{cfg.scale}: {flops / 1e9:.2f}G")
    if cfg.scale == 4:
        _echo(f"reference {REFERENCE_MACS_X4 / 1e9:.1f}G, diff {100 * (flops - REFERENCE_MACS_X4) / REFERENCE_MACS_X4:+.2f}%")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "params.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["module", "params"])
            w.writerows(bd.items())
            w.writerow(["total", sum(bd.values())])
        plot_param_breakdown(bd, out / "params.png", REFERENCE_PARAMS[cfg.scale])
    return EXIT_OK


def cmd_scan_check(args) -> int:
    from .ssm import selective_scan, selective_scan_reference
    from .rng import SplitMix64

    rng = SplitMix64(args.seed)
    worst, ok = 0.0, 0
    for _ in range(args.trials):
        L = 1 + int(rng.integers(64, 1)[0])
        d = 1 + int(rng.integers(8, 1)[0])
        n = 1 + int(rng.integers(8, 1)[0])
        x = rng.normal(L * d).reshape(L, d)
        delta = np.exp(rng.uniform(np.log(1e-3), np.log(1.0), L * d)).reshape(L, d)
        A = -np.exp(rng.uniform(-2.0, 2.0, d * n)).reshape(d, n)
        B = rng.normal(L * n).reshape(L, n)
        Cm = rng.normal(L * n).reshape(L, n)
        D = rng.normal(d)
        err = float(np.abs(selective_scan(x, delta, A, B, Cm, D).data
                           - selective_scan_reference(x, delta, A, B, Cm, D)).max())
        worst = max(worst, err)
        ok += err <= args.tol
    _echo(f"{ok}/{args.trials} within tolerance (max abs deviation {worst:.3e}, tol {args.tol:g})")
    if ok != args.trials:
        raise NumericFailure(f"{args.trials - ok} scan instances exceeded {args.tol:g}")
    return EXIT_OK


def _model_from(args, default_preset: str = "toy") -> TPMambaSR:
    if args.ckpt:
        return _load_ckpt(args.ckpt, args)
    return TPMambaSR(resolve_config(args, default_preset=default_preset), seed=args.seed)


def cmd_rf_probe(args) -> int:
    from .plotting import plot_support_maps, save_gray_png
    from .probes import RF_STAGES, gradient_support, tl_support_bound

    model = _model_from(args)
    stages = RF_STAGES if args.stage == "all" else (args.stage.upper(),)
    out = Path(args.out)
    maps = []
    for st in stages:
        sm = gradient_support(model, st, args.size, args.seed)
        if not np.all(np.isfinite(sm.magnitude)):
            raise NumericFailure(f"non-finite gradients at stage {st}")
        maps.append(sm)
        save_gray_png(sm.normalized(), out / f"rf_{st.lower()}.png")
        y0, y1, x0, x1 = sm.bounding_box()
        _echo(f"{st:<5} coverage {100 * sm.coverage:6.2f}%  support box rows {y0}:{y1} cols {x0}:{x1}")
    if "TL" in stages:
        bound = tl_support_bound(model.cfg.window_attn, 1, args.size)
        _echo(f"window-local bound for TL: {100 * bound:.2f}%")
    with open(out / "rf_coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "coverage", "threshold"])
        for sm in maps:
            w.writerow([sm.stage, repr(sm.coverage), sm.threshold])
    plot_support_maps(maps, out / "rf_stages.png")
    return EXIT_OK


def cmd_freq_probe(args) -> int:
    from .plotting import plot_freq
    from .probes import frequency_probe

    model = _model_from(args)
    img = load_png(args.inp)
    rep = frequency_probe(model, img)
    if not all(np.isfinite(v) for v in (rep.hf_before, rep.hf_after, rep.ac_before, rep.ac_after)):
        raise NumericFailure("non-finite energies in the frequency probe")
    _echo(f"high-pass energy  before {rep.hf_before:.6g}  after {rep.hf_after:.6g}  ratio {rep.hf_ratio:.4f}")
    _echo(f"AC energy         before {rep.ac_before:.6g}  after {rep.ac_after:.6g}  ratio {rep.ac_ratio:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "freq_energy.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "before", "after", "ratio"])
            w.writerow(["high_pass", repr(rep.hf_before), repr(rep.hf_after), repr(rep.hf_ratio)])
            w.writerow(["ac", repr(rep.ac_before), repr(rep.ac_after), repr(rep.ac_ratio)])
        plot_freq(rep.features, {"x_lf": rep.hf_before, "x_r": rep.hf_after}, out / "freq_features.png")
    return EXIT_OK


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tpmamba", description="Desk-scale progressive attention/Mamba super-resolution.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp, ckpt=False):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="JSON or YAML file with ModelConfig fields")
        sp.add_argument("--preset", help=f"named configuration: {', '.join(C.PRESETS)}")
        if ckpt:
            sp.add_argument("--ckpt")

    t = sub.add_parser("train", help="train on <data>/HR/*.png")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--val", help="validation root (default: <data>/val or the last training image)")
    t.add_argument("--out", required=True)
    t.add_argument("--scale", type=int, default=2)
    t.add_argument("--iters", type=int, default=5000)
    t.add_argument("--batch", type=int, default=4)
    t.add_argument("--patch", type=int, default=32, help="LR patch side")
    t.add_argument("--val-every", type=int, default=500)
    t.add_argument("--checkpoint-every", type=int, default=1000)
    t.add_argument("--resume", help="continue from a checkpoint written by train")
    t.add_argument("--sample-data", action="store_true", help="create a sample dataset at --data if absent")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sr", help="super-resolve one PNG")
    common(s)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sr)

    e = sub.add_parser("eval", help="PSNR/SSIM on a directory of HR PNGs")
    common(e, ckpt=True)
    e.add_argument("--hr-dir", required=True)
    e.add_argument("--scale", type=int)
    e.add_argument("--shave", type=int)
    e.add_argument("--bypass", action="store_true", help="score HR against itself instead of a network")
    e.add_argument("--csv")
    e.add_argument("--plot")
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("inspect", help="parameter and MAC audit")
    common(i)
    i.add_argument("--scale", type=int)
    i.add_argument("--out")
    i.set_defaults(fn=cmd_inspect)

    c = sub.add_parser("scan-check", help="compare the compiled scan against the reference recurrence")
    common(c)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--tol", type=float, default=1e-8)
    c.set_defaults(fn=cmd_scan_check)

    r = sub.add_parser("rf-probe", help="centre-pixel gradient support per stage")
    common(r, ckpt=True)
    r.add_argument("--stage", default="all", choices=["tl", "wsml", "gsml", "all", "TL", "WSML", "GSML"])
    r.add_argument("--size", type=int, default=64)
    r.add_argument("--out", default="rf_probe")
    r.set_defaults(fn=cmd_rf_probe)

    f = sub.add_parser("freq-probe", help="high-frequency energy around the refinement module")
    common(f, ckpt=True)
    f.add_argument("--in", dest="inp", required=True)
    f.add_argument("--out")
    f.set_defaults(fn=cmd_freq_probe)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
