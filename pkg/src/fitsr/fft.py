"""Unitary discrete Fourier transforms.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform; any
other length goes through Bluestein's chirp-z reformulation on top of it.
2D transforms are scaled by ``1/sqrt(M*N)`` in both directions so that
Parseval's identity holds with no extra factors.
"""

from __future__ import annotations

import contextlib
from functools import lru_cache

import numpy as np

from .tensor import CTensor

# Test hook: multiplies the 2D normalization. Must stay 1.0 outside selftest mutations.
_norm_perturbation = 1.0


@contextlib.contextmanager
def perturbed_normalization(factor: float):
    """Temporarily corrupt the 2D normalization (used to prove selftest catches it)."""
    global _norm_perturbation
    old = _norm_perturbation
    _norm_perturbation = factor
    try:
        yield
    finally:
        _norm_perturbation = old


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int) -> np.ndarray:
    # factors exp(-i*pi*k/m), k < m, for butterflies of span 2m
    return np.exp(-1j * np.pi * np.arange(m) / m)


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = np.ascontiguousarray(x[..., _bitrev(n)])
    out = np.empty_like(y)
    m = 1
    while m < n:
        # ping-pong between two buffers; each stage combines pairs of span-m blocks
        src = y.reshape(*lead, n // (2 * m), 2, m)
        dst = out.reshape(*lead, n // (2 * m), 2, m)
        b = src[..., 1, :] * _twiddles(m)
        np.add(src[..., 0, :], b, out=dst[..., 0, :])
        np.subtract(src[..., 0, :], b, out=dst[..., 1, :])
        y, out = out, y
        m *= 2
    return y


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    m = 1 << (2 * n - 2).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    return m, chirp, _fft_pow2(b)


def _fft_any(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if _is_pow2(n):
        return _fft_pow2(x)
    m, chirp, fb = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = np.conj(_fft_pow2(np.conj(_fft_pow2(a) * fb))) / m
    return conv[..., :n] * chirp


def fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT along ``axis`` of a complex array."""
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    return np.moveaxis(_fft_any(x), -1, axis)


def ifft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalized inverse DFT (positive exponent, no 1/n)."""
    return np.conj(fft(np.conj(np.asarray(x, dtype=np.complex128)), axis=axis))


def fft2_array(z: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary 2D transform over the last two axes of a complex ndarray."""
    z = np.asarray(z, dtype=np.complex128)
    m, n = z.shape[-2:]
    f = ifft if inverse else fft
    out = f(f(z, axis=-1), axis=-2)
    return out * (_norm_perturbation / np.sqrt(m * n))


def _to_complex(x) -> np.ndarray:
    if isinstance(x, CTensor):
        return x.to_complex()
    return np.asarray(x, dtype=np.float64).astype(np.complex128)


def fft2(x) -> CTensor:
    """Per-channel unitary 2D DFT of a real (C, H, W) array or a CTensor."""
    return CTensor.from_complex(fft2_array(_to_complex(x)))


def ifft2(x) -> CTensor:
    return CTensor.from_complex(fft2_array(_to_complex(x), inverse=True))


def fftshift2(x):
    """Cyclic shift by (H//2, W//2) over the last two axes, DC to the center."""
    if isinstance(x, CTensor):
        return CTensor(fftshift2(x.re), fftshift2(x.im))
    h, w = x.shape[-2:]
    return np.roll(x, (h // 2, w // 2), axis=(-2, -1))
