"""PSNR, bicubic resampling and the frequency error map."""

from __future__ import annotations

import math

import numpy as np

from .fft import fft2, fftshift2
from .tensor import ShapeError

PSNR_CAP = 99.0
LUMA = np.array([0.299, 0.587, 0.114])


def luma(img: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA, img, axes=(0, 0))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0, use_luma: bool = False,
         shave: int = 0) -> float:
    """Peak signal-to-noise ratio in dB; capped at 99 dB for (near) identical inputs."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr: {a.shape} vs {b.shape}")
    a = np.clip(a, 0.0, peak)
    b = np.clip(b, 0.0, peak)
    if use_luma:
        a, b = luma(a)[None], luma(b)[None]
    if shave:
        a = a[:, shave:-shave, shave:-shave]
        b = b[:, shave:-shave, shave:-shave]
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return PSNR_CAP
    return 10.0 * math.log10(peak * peak / mse)


def cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    return np.where(
        x <= 1, (a + 2) * x3 - (a + 3) * x2 + 1,
        np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0),
    )


def resample_weights(n_in: int, n_out: int, scale: float, antialias: bool = True):
    """Tap indices and weights (n_out, taps) for one axis.

    Pixel centers are aligned (``src = (dst + 0.5) / scale - 0.5``); edge taps
    are clamped. When shrinking with ``antialias`` the kernel is stretched by
    ``1/scale`` as in MATLAB's ``imresize``.
    """
    stretch = 1.0 / scale if (antialias and scale < 1.0) else 1.0
    support = 2.0 * stretch
    src = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(src - support).astype(np.intp) + 1
    taps = int(math.ceil(2 * support)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    w = cubic((src[:, None] - idx) / stretch)
    w = w / w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def _resize_axis(img: np.ndarray, axis: int, n_out: int, scale: float, antialias: bool):
    idx, w = resample_weights(img.shape[axis], n_out, scale, antialias)
    moved = np.moveaxis(img, axis, -1)
    out = np.einsum("...ok,ok->...o", moved[..., idx], w)
    return np.moveaxis(out, -1, axis)


def bicubic_resize(img: np.ndarray, eta_h: float, eta_w: float | None = None,
                   antialias: bool = True) -> np.ndarray:
    """Separable cubic (a = -0.5) resize of (C, H, W) to round(eta * dims)."""
    if eta_w is None:
        eta_w = eta_h
    if eta_h <= 0 or eta_w <= 0:
        raise ValueError(f"scale factors must be positive, got ({eta_h}, {eta_w})")
    _, h, w = img.shape
    ho, wo = max(1, int(round(eta_h * h))), max(1, int(round(eta_w * w)))
    out = _resize_axis(img, 1, ho, eta_h, antialias)
    return _resize_axis(out, 2, wo, eta_w, antialias)


def frequency_error_map(sr: np.ndarray, hr: np.ndarray) -> np.ndarray:
    """|log(1+|F(sr)|) - log(1+|F(hr)|)| on luma, DC shifted to the center."""
    if sr.shape != hr.shape:
        raise ShapeError(f"frequency_error_map: {sr.shape} vs {hr.shape}")
    fs = fft2(luma(sr)[None])
    fh = fft2(luma(hr)[None])
    mag_s = np.hypot(fs.re, fs.im)
    mag_h = np.hypot(fh.re, fh.im)
    return fftshift2(np.abs(np.log1p(mag_s) - np.log1p(mag_h)))[0]


def render_error_map(emap: np.ndarray) -> np.ndarray:
    """RGB uint8 rendering: red for the largest error, green for none."""
    from matplotlib import colormaps

    top = float(emap.max())
    norm = emap / top if top > 0 else np.zeros_like(emap)
    rgba = colormaps["RdYlGn"](1.0 - norm)
    return np.round(rgba[..., :3] * 255).astype(np.uint8)
