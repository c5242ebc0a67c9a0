"""Release acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL``/``SKIP`` line that is printed at the
end of the pytest run (and immediately, when run with ``-s``).
"""

import csv
import os
import subprocess
import sys
import time
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from _images import synthetic_image
from conftest import ACCEPTANCE_LINES

from fitsr import selftest
from fitsr.evaluation import psnr
from fitsr.imageio import write_png
from fitsr.model import ModelConfig, ModelParams, fit_forward, tiny_config
from fitsr.train import TrainConfig, bilinear_resize, synth_pair, train

DIV2K_ENV = "FIT_DIV2K_DIR"


def report(num: int, status: str, detail: str) -> None:
    line = f"{status} criterion {num}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def check(num: int, ok: bool, detail: str) -> None:
    report(num, "PASS" if ok else "FAIL", detail)
    assert ok, detail


def _cli(*args, cwd, env=None):
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "fitsr", *map(str, args)], cwd=cwd,
                          env=full_env, capture_output=True, text=True)


# 1 ---------------------------------------------------------------------------

def test_c1_bicubic_baseline_div2k(tmp_path):
    root = os.environ.get(DIV2K_ENV)
    if not root or not Path(root).is_dir():
        report(1, "SKIP", f"DIV2K validation HR images not available (set {DIV2K_ENV})")
        pytest.skip(f"set {DIV2K_ENV} to the DIV2K validation HR directory")
    t0 = time.perf_counter()
    out = tmp_path / "div2k.csv"
    res = _cli("eval", "bicubic", root, "--scales", "2,4", "--out", out, cwd=tmp_path,
               env={"FIT_THREADS": "1"})
    elapsed = time.perf_counter() - t0
    assert res.returncode == 0, res.stderr
    rows = list(csv.reader(open(out)))
    mean = dict(zip(rows[0][1:], map(float, rows[-1][1:])))
    n = len(rows) - 2
    ok = (abs(mean["x2"] - 31.01) <= 0.30 and abs(mean["x4"] - 26.66) <= 0.30
          and elapsed < 600)
    check(1, ok, f"{n} images: x2 {mean['x2']:.2f} dB (target 31.01 +- 0.30), "
                 f"x4 {mean['x4']:.2f} dB (target 26.66 +- 0.30), {elapsed:.0f} s (limit 600)")


# 2 ---------------------------------------------------------------------------

def test_c2_trained_rows_not_reproducible():
    report(2, "SKIP", "trained-model table rows need full-scale training with large encoders; "
                      "substituted by the property criteria 3-10")
    pytest.skip("not reproducible at desk scale by design")


# 3 ---------------------------------------------------------------------------

def test_c3_fft_suite():
    t0 = time.perf_counter()
    errs = selftest.fft_errors(seed=0)
    elapsed = time.perf_counter() - t0
    bad = [k for k, v in errs.items() if not v < selftest.FFT_TOL[k]]
    sizes = {(m, n) for m, n in selftest.FFT_SIZES}
    covered = all((m, n) in sizes for m in range(1, 9) for n in range(1, 9)) and \
        {(48, 48), (7, 5), (17, 13)} <= sizes
    worst = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    check(3, not bad and covered and errs["naive"] <= 1e-9 and elapsed < 10,
          f"{worst}; {len(sizes)} sizes in {elapsed:.2f} s (limit 10)")


# 4 ---------------------------------------------------------------------------

def test_c4_gradient_checks():
    t0 = time.perf_counter()
    errs = selftest.gradient_errors(seed=0)
    elapsed = time.perf_counter() - t0
    per_module = {k: e for k, (e, _) in errs.items() if k not in ("quadratic", "end_to_end")}
    ok = (all(e < 1e-4 for e in per_module.values()) and errs["end_to_end"][0] < 1e-3
          and elapsed < 60)
    detail = ", ".join(f"{k} {e:.1e}" for k, (e, _) in errs.items())
    check(4, ok, f"{detail}; module limit 1e-4, end-to-end limit 1e-3; {elapsed:.1f} s (limit 60)")


# 5 ---------------------------------------------------------------------------

def test_c5_attention_oracles():
    ei = selftest.iisa_oracle_error(25, seed=1)
    ef = selftest.fcsa_oracle_error(25, seed=1)
    check(5, max(ei, ef) < 1e-9, f"25 instances each: local {ei:.1e}, global {ef:.1e} (limit 1e-9)")


# 6 ---------------------------------------------------------------------------

def test_c6_shape_law():
    n = len(selftest.SHAPE_SCALES) * len(selftest.SHAPE_SIZES)
    bad = selftest.shape_law_failures(seed=0)
    has_fractional = {1.5, 2.5, 3.3, 4.2} <= set(selftest.SHAPE_SCALES)
    check(6, n == 21 and not bad and has_fractional,
          f"{n - len(bad)}/{n} (scale, size) combinations give round(scale * dim)"
          + (f"; failures: {bad}" if bad else ""))


# 7 ---------------------------------------------------------------------------

def test_c7_losslessness():
    e = selftest.lossless_errors(seed=0)
    check(7, e["split_comp"] == 0.0 and e["distributivity"] < 1e-10,
          f"split/comp bit-exact={e['split_comp'] == 0.0}, "
          f"distributivity {e['distributivity']:.1e} (limit 1e-10)")


# 8 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_c8_overfit_smoke():
    steps = 300
    hr = synthetic_image(32)
    pair = synth_pair(hr, 2.0, np.random.default_rng(0), samples=1024, flips=(False,) * 3)
    base = psnr(bilinear_resize(pair.lr, 32, 32), hr)
    cfg = TrainConfig(batch_size=1, epochs=steps, lr_start=1e-4, lr_peak=1e-3, lr_floor=1e-5,
                      warmup=10, patch=16, scale_min=2, scale_max=2, samples=1024, augment=False)
    t0 = time.perf_counter()
    trained, _ = train(ModelParams.init(ModelConfig(), 0), [hr], cfg, fixed_batch=[pair])
    elapsed = time.perf_counter() - t0
    model = psnr(fit_forward(pair.lr, 2.0, 2.0, trained), hr)
    check(8, model >= base + 2.0 and steps <= 500 and elapsed < 300,
          f"model {model:.2f} dB vs bilinear {base:.2f} dB (need +2.00) after {steps} steps "
          f"in {elapsed:.0f} s (limit 300)")


# 9 ---------------------------------------------------------------------------

def test_c9_ablation_configurations():
    img = synthetic_image(12, seed=2)
    variants = {f"s={s}": ModelConfig(subspaces=s) for s in (0, 2, 4, 8, 16)}
    variants["all-spatial"] = ModelConfig(subspaces=4, all_spatial=True)
    outs = {k: fit_forward(img, 2.0, 2.0, ModelParams.init(cfg, seed=0))
            for k, cfg in variants.items()}
    gaps = {(a, b): float(np.abs(outs[a] - outs[b]).max()) for a, b in combinations(outs, 2)}
    smallest = min(gaps, key=gaps.get)
    check(9, all(v > 1e-6 for v in gaps.values()) and all(o.shape == (3, 24, 24) for o in outs.values()),
          f"{len(outs)} variants ran; smallest pairwise gap {gaps[smallest]:.2e} "
          f"({smallest[0]} vs {smallest[1]}, limit 1e-6)")


# 10 --------------------------------------------------------------------------

@pytest.mark.slow
def test_c10_determinism(tmp_path):
    (tmp_path / "data").mkdir()
    write_png(tmp_path / "data" / "a.png", synthetic_image(24))
    write_png(tmp_path / "lr.png", synthetic_image(10, seed=3))
    (tmp_path / "tiny.cfg").write_text(
        "channels=8\nencoder_depth=2\nfim_blocks=1\npe_hidden=16\ndecoder_hidden=16\n"
        "batch_size=2\npatch=8\nsamples=64\nepochs=12\nwarmup=3\n")
    artifacts = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        steps = [
            ("--seed", 5, "--config", "../tiny.cfg", "train", "../data", "--out", "m.fitc",
             "--figures", "figs"),
            ("infer", "m.fitc", "../lr.png", "--scale", "2.5,1.8", "--out", "sr.png"),
            ("eval", "m.fitc", "../data", "--scales", "2,3", "--out", "eval.csv"),
        ]
        for args in steps:
            res = _cli(*args, cwd=d)
            assert res.returncode == 0, res.stderr
        names = ["m.fitc", "m.log.csv", "sr.png", "eval.csv", "figs/loss_curve.png"]
        artifacts.append({n: (d / n).read_bytes() for n in names})
    same = [n for n in artifacts[0] if artifacts[0][n] == artifacts[1][n]]
    check(10, len(same) == len(artifacts[0]),
          f"byte-identical across two runs: {', '.join(same)}"
          + ("" if len(same) == len(artifacts[0]) else
             f"; differing: {sorted(set(artifacts[0]) - set(same))}"))
