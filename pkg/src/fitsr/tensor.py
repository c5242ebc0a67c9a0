"""Dense real/complex tensor primitives.

Real tensors are plain float64 ``numpy.ndarray`` objects. Feature maps use
``(C, H, W)`` layout. Complex tensors keep separate real and imaginary
planes in :class:`CTensor`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """Invalid configuration (kernel extents, channel splits, ...)."""


def as_tensor(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1)
    return a


@dataclass(frozen=True)
class CTensor:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"real plane {self.re.shape} != imaginary plane {self.im.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "CTensor":
        z = np.asarray(z, dtype=np.complex128)
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    def __add__(self, other: "CTensor") -> "CTensor":
        _same_shape(self.re, other.re, "add")
        return CTensor(self.re + other.re, self.im + other.im)

    def scale(self, a: float) -> "CTensor":
        return CTensor(self.re * a, self.im * a)


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _check_kernel(kernel: np.ndarray) -> None:
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (Cout, Cin, kh, kw), got {kernel.shape}")
    kh, kw = kernel.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d kernel extents must be odd, got {kh}x{kw}")


def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Zero-padded patches of ``x`` (Cin, H, W) as an (H*W, Cin*kh*kw) matrix."""
    cin, h, w = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # win: (Cin, H, W, kh, kw)
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, cin * kh * kw)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Same-size 2D cross-correlation with zero padding.

    ``x`` is (Cin, H, W), ``kernel`` is (Cout, Cin, kh, kw) with odd extents.
    """
    _check_kernel(kernel)
    if x.ndim != 3 or x.shape[0] != kernel.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} does not match kernel {kernel.shape}")
    cout, cin, kh, kw = kernel.shape
    _, h, w = x.shape
    cols = im2col(x, kh, kw)
    out = (kernel.reshape(cout, -1) @ cols.T).reshape(cout, h, w)
    if bias is not None:
        out = out + bias.reshape(cout, 1, 1)
    return out


def pconv(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Point-wise (1x1) convolution: per-pixel channel mixing with ``w`` (Cout, Cin)."""
    if x.ndim != 3 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"pconv: input {x.shape} does not match weights {w.shape}")
    c, h, wd = x.shape
    out = (w @ x.reshape(c, h * wd)).reshape(w.shape[0], h, wd)
    if bias is not None:
        out = out + bias.reshape(-1, 1, 1)
    return out


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def cmul(a: CTensor, b: CTensor) -> CTensor:
    _same_shape(a.re, b.re, "cmul")
    return CTensor(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def cmatmul(a: CTensor, b: CTensor) -> CTensor:
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cmatmul: cannot multiply {a.shape} by {b.shape}")
    return CTensor(a.re @ b.re - a.im @ b.im, a.re @ b.im + a.im @ b.re)


def comp(re: np.ndarray, im: np.ndarray) -> CTensor:
    """Assemble a complex tensor from its planes (no arithmetic, so lossless)."""
    _same_shape(re, im, "comp")
    return CTensor(re, im)


def split(z: CTensor) -> tuple[np.ndarray, np.ndarray]:
    return z.re, z.im
