"""Release self-test: FFT properties, losslessness, gradients, attention oracles, shapes."""

from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import reference as ref
from .coords import make_coord_grid, make_query_grid
from .fcsa import FcsaParams, attention_nodes, fcsa_forward
from .fft import fft2, fft2_array, ifft2
from .fim import FimParams, fim_forward, fim_nodes
from .iisa import IisaConfig, IisaParams, attend_nodes, iisa_attend, maps_nodes
from .model import (
    ModelParams,
    decoder_nodes,
    encoder_nodes,
    features_nodes,
    fit_forward,
    output_size,
    query_nodes,
    tiny_config,
)
from .tensor import comp, conv2d

FFT_SIZES = [(m, n) for m in range(1, 9) for n in range(1, 9)] + [(48, 48), (7, 5), (17, 13)]
SHAPE_SCALES = (1, 1.5, 2, 2.5, 3.3, 4, 4.2)
SHAPE_SIZES = ((8, 8), (10, 7), (17, 13))


# ------------------------------------------------------------------ fft


def fft_errors(seed: int = 0) -> dict[str, float]:
    """Worst error of each FFT property over the standard size list."""
    rng = np.random.default_rng(seed)
    worst = dict(roundtrip=0.0, parseval=0.0, linearity=0.0, naive=0.0, unitarity=0.0)
    for m, n in FFT_SIZES:
        a = rng.normal(size=(1, m, n))
        b = rng.normal(size=(1, m, n))
        fa = fft2(a)
        back = ifft2(fa)
        worst["roundtrip"] = max(worst["roundtrip"], np.abs(back.re - a).max(), np.abs(back.im).max())
        ea, eb = np.sum(a * a), np.sum(fa.re**2 + fa.im**2)
        worst["parseval"] = max(worst["parseval"], abs(ea - eb) / ea)
        al, be = rng.normal(size=2)
        lhs = fft2_array(al * a + be * b)
        rhs = al * fft2_array(a) + be * fft2_array(b)
        worst["linearity"] = max(worst["linearity"], np.abs(lhs - rhs).max())
        inner_x = np.vdot(a, b)
        inner_f = np.vdot(fft2_array(a), fft2_array(b))
        worst["unitarity"] = max(worst["unitarity"], abs(inner_f - inner_x) / max(abs(inner_x), 1e-12))
        worst["naive"] = max(worst["naive"], np.abs(fa.to_complex()[0] - ref.naive_dft2(a[0])).max())
    return worst


FFT_TOL = dict(roundtrip=1e-10, parseval=1e-10, linearity=1e-10, naive=1e-9, unitarity=1e-10)


# ------------------------------------------------------------ lossless


def lossless_errors(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    x = fft2(rng.normal(size=(3, 8, 8)))
    again = comp(x.re, x.im)
    bit_exact = float(not (np.array_equal(again.re, x.re) and np.array_equal(again.im, x.im)))
    re, im = rng.normal(size=(2, 2, 8, 8))
    k = rng.normal(size=(2, 2, 3, 3))
    split_route = conv2d(re, k) + 1j * conv2d(im, k)
    # direct complex correlation with zero padding
    z = np.pad(re + 1j * im, ((0, 0), (1, 1), (1, 1)))
    direct = np.zeros((2, 8, 8), dtype=np.complex128)
    for o in range(2):
        for i in range(2):
            for a in range(3):
                for b in range(3):
                    direct[o] += k[o, i, a, b] * z[i, a:a + 8, b:b + 8]
    return {"split_comp": bit_exact, "distributivity": float(np.abs(split_route - direct).max())}


# ------------------------------------------------------------ gradients

GradCase = tuple[Callable, dict, float, float]


def gradient_cases(seed: int = 0) -> dict[str, GradCase]:
    """name -> (loss builder, params, step, tolerance)."""
    rng = np.random.default_rng(seed)
    cases: dict[str, GradCase] = {}

    a_mat = rng.normal(size=(4, 4))
    a_mat = a_mat @ a_mat.T + np.eye(4)
    cases["quadratic"] = (
        lambda t, P: ad.sum(ad.mul(P["x"], ad.matmul(a_mat, ad.reshape(P["x"], (4, 1))).T)),
        {"x": rng.normal(size=(1, 4))}, 1e-5, 1e-8,
    )

    z6 = rng.normal(size=(4, 6, 6))
    fim_p = FimParams.init(4, rng).as_dict()
    fim_p = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in fim_p.items()}
    # Targets sit at least 0.5 away from the output so no L1 kink lies within
    # the step. The block is then at most quadratic in each parameter, central
    # differences are exact, and a large step keeps round-off small. This
    # matters for conv_im_bias, whose true gradient is exactly zero.
    out6 = fim_forward(z6, FimParams.from_mapping(fim_p))
    tgt6 = out6 + rng.choice([-1.0, 1.0], size=out6.shape) * (0.5 + rng.uniform(size=out6.shape))
    cases["fim"] = (
        lambda t, P: ad.l1_loss(fim_nodes(z6, P), tgt6), fim_p, 1e-3, 1e-4,
    )

    cfg = tiny_config()
    params = ModelParams.init(cfg, seed + 1)
    params.tensors = {k: v + 0.05 * rng.normal(size=v.shape) for k, v in params.tensors.items()}
    img = rng.uniform(size=(3, 6, 6))
    grid = make_coord_grid(12, 12)
    pick = rng.choice(144, size=4, replace=False)
    queries, cells = grid.coords[pick], grid.cell[pick]
    target = rng.uniform(size=(4, 3))

    enc_p = {k: v for k, v in params.tensors.items() if k.startswith("enc.")}
    enc_t = rng.normal(size=(cfg.channels, 6, 6))
    cases["encoder"] = (
        lambda t, P: ad.l1_loss(encoder_nodes(img, P, cfg), enc_t), enc_p, 1e-5, 1e-4,
    )

    icfg = cfg.iisa
    iisa_p = {k[5:]: v for k, v in params.tensors.items() if k.startswith("iisa.")}
    zc = rng.normal(size=(cfg.channels, 5, 5))

    def iisa_loss(t, P):
        q, v = maps_nodes(zc, P, icfg)
        out, _ = attend_nodes(q, v, queries, cells, P, icfg)
        return ad.l1_loss(out, np.zeros((4, cfg.channels)) + 0.1)

    cases["iisa"] = (iisa_loss, iisa_p, 1e-5, 1e-4)

    fcsa_p = {"qkv": params.tensors["fcsa.qkv"]}
    fcsa_t = rng.normal(size=(25, cfg.channels))
    cases["fcsa"] = (
        lambda t, P: ad.l1_loss(attention_nodes(zc, P)[1], fcsa_t), fcsa_p, 1e-5, 1e-4,
    )

    dec_p = {k: v for k, v in params.tensors.items() if k.startswith("dec.")}
    dec_in = rng.normal(size=(4, cfg.channels))
    cases["decoder"] = (
        lambda t, P: ad.l1_loss(decoder_nodes(dec_in, P, cfg), target), dec_p, 1e-5, 1e-4,
    )

    def full_loss(t, P):
        feat = features_nodes(img, P, cfg)
        return ad.l1_loss(query_nodes(img, feat, queries, cells, P, cfg), target)

    # h = 1e-4 balances truncation against round-off through the deep composition
    cases["end_to_end"] = (full_loss, params.tensors, 1e-4, 1e-3)
    return cases


def gradient_errors(seed: int = 0, names=None) -> dict[str, tuple[float, float]]:
    out = {}
    for name, (f, params, h, tol) in gradient_cases(seed).items():
        if names is not None and name not in names:
            continue
        out[name] = (ad.grad_check(f, params, h=h, seed=seed), tol)
    return out


# ------------------------------------------------------------- oracles


def random_iisa_instance(rng: np.random.Generator):
    heads = int(rng.choice([1, 2, 4]))
    cfg = IisaConfig(channels=8, subspaces=int(rng.choice([0, 2, 4, 8])), heads=heads,
                     pe_hidden=6, grid=(3, 3))
    p = IisaParams.init(cfg, rng)
    h, w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    q = rng.normal(size=(8, h, w))
    v = rng.normal(size=(8, h, w))
    queries = rng.uniform(-1, 1, size=(3, 2))
    cells = rng.uniform(0.05, 0.6, size=(3, 2))
    return cfg, p, q, v, queries, cells


def iisa_oracle_error(n_instances: int = 20, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        cfg, p, q, v, queries, cells = random_iisa_instance(rng)
        fast = iisa_attend(q, v, queries, cells, p, cfg)
        layers = [(p.pe_w1, p.pe_b1), (p.pe_w2, p.pe_b2)]
        for i in range(len(queries)):
            slow = ref.iisa_attend(q, v, queries[i], cells[i], layers, cfg.heads, cfg.grid, cfg.enc_len)
            worst = max(worst, float(np.abs(fast[i] - slow).max()))
    return worst


def fcsa_oracle_error(n_instances: int = 20, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        c = int(rng.choice([2, 4]))
        h, w = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        z = rng.normal(size=(c, h, w))
        p = FcsaParams.init(c, rng)
        queries = rng.uniform(-1, 1, size=(3, 2))
        fast = fcsa_forward(z, make_query_grid(queries, h, w), p)
        for i in range(len(queries)):
            worst = max(worst, float(np.abs(fast[i] - ref.fcsa_forward(z, p.qkv, queries[i])).max()))
    return worst


# --------------------------------------------------------------- shapes


def shape_law_failures(seed: int = 0) -> list[str]:
    params = ModelParams.init(tiny_config(), seed)
    rng = np.random.default_rng(seed)
    bad = []
    for h, w in SHAPE_SIZES:
        img = rng.uniform(size=(3, h, w))
        for eta in SHAPE_SCALES:
            out = fit_forward(img, eta, eta, params)
            want = (3,) + output_size(h, w, eta, eta)
            if out.shape != want:
                bad.append(f"{h}x{w} at x{eta}: got {out.shape[1:]}, want {want[1:]}")
    return bad


# ------------------------------------------------------------------ run


def run(seed: int = 0, echo=print) -> bool:
    groups: list[tuple[str, Callable[[], tuple[bool, str]]]] = []

    fft_cache: dict[str, float] = {}

    def fft_group(key):
        def check():
            if not fft_cache:
                fft_cache.update(fft_errors(seed))
            errs = fft_cache
            return errs[key] < FFT_TOL[key], f"max error {errs[key]:.3e} (tol {FFT_TOL[key]:.0e})"
        return check

    for key in ("roundtrip", "parseval", "linearity", "unitarity", "naive"):
        groups.append((f"fft-{key}", fft_group(key)))

    def lossless():
        e = lossless_errors(seed)
        ok = e["split_comp"] == 0.0 and e["distributivity"] < 1e-10
        return ok, f"split/comp exact={e['split_comp'] == 0.0}, distributivity {e['distributivity']:.3e}"

    def gradients():
        errs = gradient_errors(seed)
        ok = all(err < tol for err, tol in errs.values())
        return ok, ", ".join(f"{k} {err:.1e}" for k, (err, _) in errs.items())

    def oracles():
        ei, ef = iisa_oracle_error(20, seed), fcsa_oracle_error(20, seed)
        return max(ei, ef) < 1e-9, f"iisa {ei:.2e}, fcsa {ef:.2e}"

    def shapes():
        bad = shape_law_failures(seed)
        return not bad, "21 combinations ok" if not bad else "; ".join(bad)

    groups += [("losslessness", lossless), ("gradients", gradients),
               ("attention-oracles", oracles), ("shape-law", shapes)]

    all_ok = True
    for name, check in groups:
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crash counts as a failed group
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'} {name:18s} {detail} [{time.perf_counter() - t0:.1f}s]")
    return all_ok
