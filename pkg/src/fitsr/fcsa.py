"""Frequency correlation self-attention.

Token correlations come from the product of the Q and K spectra (plain
transpose, not conjugate), inverse-transformed column by column in the
original H x W geometry, scaled and row-softmaxed. The attended values get a
skip from the block input, and the result is read at each query grid center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .coords import QueryGrid, nearest_indices
from .fft import fft2, ifft2
from .tensor import CTensor, ConfigError, ShapeError, cmatmul, pconv

MAX_TOKENS = 4096


@dataclass
class FcsaParams:
    qkv: np.ndarray  # (3C, C)

    def __post_init__(self):
        if self.qkv.ndim != 2 or self.qkv.shape[0] != 3 * self.qkv.shape[1]:
            raise ShapeError(f"qkv projection must be (3C, C), got {self.qkv.shape}")

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"qkv": self.qkv}

    @classmethod
    def init(cls, c: int, rng: np.random.Generator) -> "FcsaParams":
        b = 1.0 / np.sqrt(c)
        return cls(rng.uniform(-b, b, (3 * c, c)))


def check_tokens(h: int, w: int, limit: int | None = MAX_TOKENS) -> None:
    if limit is not None and h * w > limit:
        raise ConfigError(
            f"global attention over {h}x{w}={h * w} tokens exceeds the limit of {limit}"
        )


def attention_nodes(z, p):
    """Returns (F_attn (N, N), attended map rows (N, C)) for a (C, H, W) node."""
    c, h, w = z.shape
    n = h * w
    qkv = ad.pconv(z, p["qkv"])
    q, k, v = qkv[0:c], qkv[c:2 * c], qkv[2 * c:3 * c]
    fq = ad.fft2c(ad.complex_from_real(q))  # (2, C, H, W)
    fk = ad.fft2c(ad.complex_from_real(k))
    fq_rows = ad.transpose(ad.reshape(fq, (2, c, n)), (0, 2, 1))  # (2, N, C)
    fk_t = ad.reshape(fk, (2, c, n))  # (2, C, N), the plain transpose of (N, C)
    corr = ad.cmatmul(fq_rows, fk_t)  # (2, N, N), rows index frequency u
    # each column j becomes an H x W spectrum over u
    cols = ad.reshape(ad.transpose(corr, (0, 2, 1)), (2, n, h, w))
    spatial = ad.ifft2c(cols)[0]  # (N_j, H, W), real part
    scores = ad.transpose(ad.reshape(spatial, (n, n)))  # [x, j]
    f_attn = ad.softmax(ad.scale(scores, 1.0 / np.sqrt(c)), axis=-1)
    v_rows = ad.transpose(ad.reshape(v, (c, n)))
    z_rows = ad.transpose(ad.reshape(z, (c, n)))
    return f_attn, ad.add(ad.matmul(f_attn, v_rows), z_rows)


def sample_centers(attn_rows, h: int, w: int, centers: np.ndarray):
    idx = nearest_indices(centers, h, w)[:, None]
    return ad.gather(attn_rows, idx, np.ones(idx.shape))


def _bind(p: FcsaParams, z: np.ndarray):
    tape = ad.Tape(record=False)
    return tape.param("z", z), {"qkv": tape.param("qkv", p.qkv)}


def fcsa_attention(z: np.ndarray, p: FcsaParams) -> np.ndarray:
    """Normalized frequency-correlation matrix F_attn (N, N)."""
    zn, nodes = _bind(p, z)
    return attention_nodes(zn, nodes)[0].value


def fcsa_map(z: np.ndarray, p: FcsaParams) -> np.ndarray:
    """Attended map with skip, as (C, H, W)."""
    zn, nodes = _bind(p, z)
    rows = attention_nodes(zn, nodes)[1].value
    return rows.T.reshape(z.shape)


def fcsa_forward(z: np.ndarray, query_grid: QueryGrid, p: FcsaParams) -> np.ndarray:
    """Global attention read at each query grid center -> (n, C)."""
    c, h, w = z.shape
    zn, nodes = _bind(p, z)
    rows = attention_nodes(zn, nodes)[1]
    return sample_centers(rows, h, w, query_grid.center).value


def imaginary_residue(z: np.ndarray, p: FcsaParams) -> tuple[float, float]:
    """(max |imag|, max |real|) of the column-wise inverse transform, before scaling."""
    c, h, w = z.shape
    n = h * w
    qkv = pconv(z, p.qkv)
    fq, fk = fft2(qkv[:c]), fft2(qkv[c:2 * c])
    rows = CTensor(fq.re.reshape(c, n).T, fq.im.reshape(c, n).T)
    cols = CTensor(fk.re.reshape(c, n), fk.im.reshape(c, n))
    corr = cmatmul(rows, cols)
    back = ifft2(CTensor(corr.re.T.reshape(n, h, w), corr.im.T.reshape(n, h, w)))
    return float(np.abs(back.im).max()), float(np.abs(back.re).max())
