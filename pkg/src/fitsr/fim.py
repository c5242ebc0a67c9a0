"""Frequency incorporation block.

FFT of the input, independent 3x3 convolutions on the real and imaginary
planes, recombination, a spectral skip of the input's own spectrum, inverse
FFT, then a point-wise convolution on the real part.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .fft import fft2, ifft2
from .tensor import CTensor, ShapeError, comp, conv2d, split  # noqa: F401  (re-exported)


@dataclass
class FimParams:
    conv_re: np.ndarray  # (C, C, 3, 3)
    conv_re_bias: np.ndarray
    conv_im: np.ndarray
    conv_im_bias: np.ndarray
    pconv: np.ndarray  # (C, C)
    pconv_bias: np.ndarray

    def __post_init__(self):
        if self.conv_re.shape != self.conv_im.shape:
            raise ShapeError(
                f"real/imaginary kernels differ: {self.conv_re.shape} vs {self.conv_im.shape}"
            )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_mapping(cls, m) -> "FimParams":
        return cls(**{f.name: m[f.name] for f in fields(cls)})

    @classmethod
    def init(cls, c: int, rng: np.random.Generator, k: int = 3) -> "FimParams":
        bound = 1.0 / np.sqrt(c * k * k)
        return cls(
            conv_re=rng.uniform(-bound, bound, (c, c, k, k)),
            conv_re_bias=np.zeros(c),
            conv_im=rng.uniform(-bound, bound, (c, c, k, k)),
            conv_im_bias=np.zeros(c),
            pconv=rng.uniform(-1 / np.sqrt(c), 1 / np.sqrt(c), (c, c)),
            pconv_bias=np.zeros(c),
        )

    @classmethod
    def identity(cls, c: int, k: int = 3) -> "FimParams":
        impulse = np.zeros((c, c, k, k))
        impulse[np.arange(c), np.arange(c), k // 2, k // 2] = 1.0
        return cls(impulse, np.zeros(c), impulse.copy(), np.zeros(c), np.eye(c), np.zeros(c))


def fim_nodes(z, p):
    """Differentiable block body; ``p`` maps FimParams field names to nodes."""
    sp = ad.fft2c(ad.complex_from_real(z))
    re = ad.conv2d(sp[0], p["conv_re"], p["conv_re_bias"])
    im = ad.conv2d(sp[1], p["conv_im"], p["conv_im_bias"])
    mixed = ad.add(ad.stack([re, im]), sp)
    back = ad.ifft2c(mixed)
    # conjugate symmetry is broken by the independent convolutions; keep the real part
    return ad.pconv(back[0], p["pconv"], p["pconv_bias"])


def fim_forward(z_in: np.ndarray, p: FimParams) -> np.ndarray:
    tape = ad.Tape(record=False)
    nodes = {k: tape.param(k, v) for k, v in p.as_dict().items()}
    return fim_nodes(tape.param("z", z_in), nodes).value


def imaginary_residue(z_in: np.ndarray, p: FimParams) -> float:
    """Largest imaginary magnitude discarded by :func:`fim_forward`."""
    sp = fft2(z_in)
    mixed = comp(conv2d(sp.re, p.conv_re, p.conv_re_bias), conv2d(sp.im, p.conv_im, p.conv_im_bias))
    return float(np.abs(ifft2(mixed + sp).im).max())
