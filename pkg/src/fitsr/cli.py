"""Command-line entry point: train, infer, eval, fem, grad-check, selftest.

Exit status is 0 on success, 1 on usage or input errors and 2 when an
invariant or self-test check fails.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint, plotting, selftest
from .config import load_config
from .evaluation import bicubic_resize, frequency_error_map, psnr, render_error_map
from .fft import perturbed_normalization
from .imageio import list_pngs, read_png, write_png, write_rgb8
from .model import ModelConfig, ModelParams, fit_forward
from .tensor import ConfigError, ShapeError
from .train import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_scale(text: str) -> tuple[float, float]:
    """'2' -> (2, 2); '2,3' -> (2, 3)."""
    parts = [p for p in text.replace(" ", "").split(",") if p]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad scale {text!r}; expected a number or 'h,w'") from None
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2 or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"bad scale {text!r}; expected a number or 'h,w'")
    return vals[0], vals[1]


def parse_scale_list(text: str) -> list[float]:
    try:
        vals = [float(p) for p in text.replace(" ", "").split(",") if p]
    except ValueError:
        raise UsageError(f"bad scale list {text!r}") from None
    if not vals:
        raise UsageError("empty scale list")
    return vals


def _configs(args) -> tuple[ModelConfig, TrainConfig]:
    mc, tc = load_config(args.config) if args.config else (ModelConfig(), TrainConfig())
    if args.seed is not None:
        tc = tc.replace(seed=args.seed)
    return mc, tc


def _threads() -> int:
    raw = os.environ.get("FIT_THREADS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"FIT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"FIT_THREADS must be a positive integer, got {raw!r}")
    return n


def _fmt(x: float) -> str:
    return f"{x:.4f}"


# --------------------------------------------------------------- train


def cmd_train(args) -> int:
    mc, tc = _configs(args)
    paths = list_pngs(args.data)
    if not paths:
        print(f"error: no training images found in {args.data}", file=sys.stderr)
        return EXIT_USAGE
    images = [read_png(p) for p in paths]
    steps = tc.epochs if args.steps is None else args.steps
    if steps < 1:
        raise UsageError("--steps must be positive")

    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    rows = []

    def record(step, loss, lr):
        rows.append((step, loss, lr))
        if args.verbose and (step % 10 == 0 or step == steps - 1):
            print(f"step {step:5d}  loss {loss:.6f}  lr {lr:.3e}", file=sys.stderr)

    params = ModelParams.init(mc, tc.seed)
    params, _ = train(params, images, tc, steps=steps, callback=record)
    checkpoint.save(out, params)
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "lr"])
        for step, loss, lr in rows:
            w.writerow([step, repr(loss), repr(lr)])
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        plotting.save_loss_curve([r[1] for r in rows], [r[2] for r in rows],
                                 fig_dir / "loss_curve.png")
    print(f"wrote {out} ({len(rows)} steps, final loss {rows[-1][1]:.6f}) and {log_path}")
    return EXIT_OK


# --------------------------------------------------------------- infer


def cmd_infer(args) -> int:
    eta_h, eta_w = parse_scale(args.scale)
    if eta_h < 1 or eta_w < 1:
        raise UsageError(f"scale must be >= 1, got {args.scale!r}")
    params = checkpoint.load(args.checkpoint)
    img = read_png(args.input)
    out = fit_forward(img, eta_h, eta_w, params)
    write_png(args.out, out)
    print(f"wrote {args.out} ({out.shape[1]}x{out.shape[2]})")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _crop_for_scale(hr: np.ndarray, eta: float) -> np.ndarray:
    # integer scales: trim HR to a multiple of the factor so LR -> SR lands exactly on it
    if float(eta).is_integer():
        k = int(eta)
        _, h, w = hr.shape
        return hr[:, : h - h % k, : w - w % k]
    return hr


BASELINES = ("bicubic", "identity")


def evaluate_image(hr: np.ndarray, eta: float, params, shave: int | None,
                   use_luma: bool = False) -> float:
    """Downscale HR by bicubic, restore with the model, return PSNR.

    ``params`` is a ModelParams or a baseline name: "bicubic" upsamples the
    LR image, "identity" scores HR against itself.
    """
    if isinstance(params, str) and params == "identity":
        return psnr(hr, hr, use_luma=use_luma)
    hr = _crop_for_scale(hr, eta)
    _, h, w = hr.shape
    lr = bicubic_resize(hr, 1.0 / eta)
    # LR inputs are stored as 8-bit images in practice
    lr = np.round(np.clip(lr, 0.0, 1.0) * 255.0) / 255.0
    _, lh, lw = lr.shape
    eh, ew = h / lh, w / lw
    if isinstance(params, str):
        sr = bicubic_resize(lr, eh, ew)
    else:
        sr = fit_forward(lr, max(eh, 1.0), max(ew, 1.0), params)
    hh, ww = min(h, sr.shape[1]), min(w, sr.shape[2])
    s = int(math.ceil(eta)) if shave is None else shave
    if min(hh, ww) <= 2 * s:
        s = 0
    return psnr(sr[:, :hh, :ww], hr[:, :hh, :ww], use_luma=use_luma, shave=s)


def _load_quiet(path):
    try:
        return read_png(path)
    except Exception as exc:  # unreadable or not a PNG
        return exc


def cmd_eval(args) -> int:
    scales = parse_scale_list(args.scales)
    if any(s < 1 for s in scales):
        raise UsageError("eval scales must be >= 1")
    params = args.model if args.model in BASELINES else checkpoint.load(args.model)
    paths = list_pngs(args.hr_dir)
    if not paths:
        print(f"error: no PNG images found in {args.hr_dir}", file=sys.stderr)
        return EXIT_USAGE

    def job(path):
        img = _load_quiet(path)
        if isinstance(img, Exception):
            return path, None, str(img)
        try:
            return path, [evaluate_image(img, s, params, args.shave, args.luma) for s in scales], None
        except (ValueError, ShapeError) as exc:
            return path, None, str(exc)

    # map keeps results in filename order regardless of completion order
    with ThreadPoolExecutor(max_workers=min(_threads(), len(paths))) as pool:
        results = list(pool.map(job, paths))

    rows, skipped = [], 0
    for path, vals, err in results:
        if vals is None:
            skipped += 1
            print(f"warning: skipping {path.name}: {err}", file=sys.stderr)
        else:
            rows.append((path.name, vals))

    header = ["image"] + [f"x{s:g}" for s in scales]
    means = [float(np.mean([v[i] for _, v in rows])) if rows else float("nan")
             for i in range(len(scales))]
    lines = [header] + [[name] + [_fmt(v) for v in vals] for name, vals in rows]
    lines.append(["mean"] + [_fmt(m) for m in means])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(lines)
    else:
        csv.writer(sys.stdout, lineterminator="\n").writerows(lines)
    if args.figures and rows:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        plotting.save_psnr_by_scale(scales, means, fig_dir / "psnr_by_scale.png",
                                    label=Path(args.model).stem)
    print(f"evaluated {len(rows)} image(s), skipped {skipped}", file=sys.stderr)
    return EXIT_OK if rows else EXIT_USAGE


# ----------------------------------------------------------------- fem


def cmd_fem(args) -> int:
    sr, hr = read_png(args.sr), read_png(args.hr)
    if sr.shape != hr.shape:
        raise UsageError(f"image sizes differ: {sr.shape[1:]} vs {hr.shape[1:]}")
    emap = frequency_error_map(sr, hr)
    write_rgb8(args.out, render_error_map(emap))
    if args.csv:
        np.savetxt(args.csv, emap, delimiter=",", fmt="%.6e")
    if args.figures:
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        plotting.save_fem_figure(emap, fig_dir / f"{Path(args.out).stem}_figure.png")
    print(f"mean,max\n{emap.mean():.6e},{emap.max():.6e}")
    return EXIT_OK


# ---------------------------------------------------------- grad-check


def cmd_grad_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    names = args.case or None
    errs = selftest.gradient_errors(seed, names)
    if names:
        missing = sorted(set(names) - set(errs))
        if missing:
            raise UsageError(f"unknown gradient case(s): {', '.join(missing)}")
    print("case,rel_err,tol,status")
    ok = True
    for name, (err, tol) in errs.items():
        passed = err < tol
        ok &= passed
        print(f"{name},{err:.3e},{tol:.0e},{'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------ selftest


FAULTS = {"fft-norm": lambda: perturbed_normalization(1.0 + 1e-3)}


def cmd_selftest(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.inject_fault:
        with FAULTS[args.inject_fault]():
            ok = selftest.run(seed)
    else:
        ok = selftest.run(seed)
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_FAIL


# -------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fitsr", description="Continuous-scale image super-resolution.")
    p.add_argument("--seed", type=int, default=None, help="global RNG seed")
    p.add_argument("--config", default=None, help="key=value configuration file")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on a directory of PNGs")
    t.add_argument("data", help="directory of HR training PNGs")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--steps", type=int, default=None, help="optimizer steps (default: epochs)")
    t.add_argument("--log", default=None, help="loss log CSV (default: <out>.log.csv)")
    t.add_argument("--figures", default=None, help="directory for the loss curve figure")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="super-resolve one PNG")
    i.add_argument("checkpoint")
    i.add_argument("input")
    i.add_argument("--scale", required=True, help="'h,w' or a single value")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="PSNR table over a directory of HR PNGs")
    e.add_argument("model", help="checkpoint path, 'bicubic' or 'identity'")
    e.add_argument("hr_dir")
    e.add_argument("--scales", "--scale", dest="scales", default="2,3,4")
    e.add_argument("--out", default=None, help="CSV path (default: stdout)")
    e.add_argument("--figures", default=None, help="directory for the PSNR-by-scale figure")
    e.add_argument("--shave", type=int, default=None, help="border crop (default: ceil(scale))")
    e.add_argument("--luma", action="store_true", help="PSNR on luma instead of RGB")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fem", help="frequency error map of SR against HR")
    f.add_argument("sr")
    f.add_argument("hr")
    f.add_argument("--out", required=True, help="rendered map PNG")
    f.add_argument("--csv", default=None, help="raw map as CSV")
    f.add_argument("--figures", default=None, help="directory for the annotated figure")
    f.set_defaults(func=cmd_fem)

    g = sub.add_parser("grad-check", help="finite-difference gradient checks")
    g.add_argument("--case", action="append", help="restrict to a named case (repeatable)")
    g.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("selftest", help="release self-test")
    s.add_argument("--inject-fault", choices=sorted(FAULTS), default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, checkpoint.CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
