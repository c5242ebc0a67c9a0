"""Continuous coordinates, query grids, sampling and positional encoding.

Coordinates are ``(y, x)`` pairs in ``[-1, 1]`` with the pixel-center
convention: row ``r`` of an ``H``-row map sits at ``-1 + (2r + 1) / H``.
All samplers clamp out-of-range positions to the border pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ConfigError


@dataclass
class CoordGrid:
    coords: np.ndarray  # (n, 2)
    cell: np.ndarray  # (n, 2)


@dataclass
class QueryGrid:
    center: np.ndarray  # (n, 2) nearest LR pixel center per query
    offsets: np.ndarray  # (Hg*Wg, 2) in LR pixel-pitch units
    coords: np.ndarray  # (n, Hg*Wg, 2), clamped to [-1, 1]


def pixel_centers(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"grid extent must be >= 1, got {n}")
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def make_coord_grid(h: int, w: int) -> CoordGrid:
    ys, xs = pixel_centers(h), pixel_centers(w)
    coords = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    cell = np.tile([2.0 / h, 2.0 / w], (h * w, 1))
    return CoordGrid(coords, cell)


def cell_for_scale(eta_h: float, eta_w: float, h: int, w: int) -> tuple[float, float]:
    """Extent of one output pixel at scale ``eta`` in normalized units."""
    return 2.0 / (eta_h * h), 2.0 / (eta_w * w)


def _continuous_index(c: np.ndarray, n: int) -> np.ndarray:
    return ((c + 1.0) * n - 1.0) / 2.0


def nearest_index(c: np.ndarray, n: int) -> np.ndarray:
    # ceil(t - 0.5) rounds half toward the lower index
    t = _continuous_index(np.asarray(c, dtype=np.float64), n)
    return np.clip(np.ceil(t - 0.5), 0, n - 1).astype(np.intp)


def nearest_indices(coords: np.ndarray, h: int, w: int) -> np.ndarray:
    """Flat (row-major) index of the nearest pixel for each coordinate."""
    coords = np.asarray(coords, dtype=np.float64)
    return nearest_index(coords[..., 0], h) * w + nearest_index(coords[..., 1], w)


def bilinear_indices(coords: np.ndarray, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices and weights of the four surrounding pixel centers.

    Returns ``(idx, weights)`` of shape ``(..., 4)``; weights sum to one.
    """
    coords = np.asarray(coords, dtype=np.float64)
    ty = np.clip(_continuous_index(coords[..., 0], h), 0.0, h - 1.0)
    tx = np.clip(_continuous_index(coords[..., 1], w), 0.0, w - 1.0)
    y0 = np.floor(ty).astype(np.intp)
    x0 = np.floor(tx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ty - y0
    fx = tx - x0
    idx = np.stack([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], axis=-1)
    weights = np.stack(
        [(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx], axis=-1
    )
    return idx, weights


def _as_rows(feat: np.ndarray) -> np.ndarray:
    c = feat.shape[0]
    return feat.reshape(c, -1).T


def bilinear_sample(feat: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample a (C, H, W) map at ``coords`` (n, 2) -> (n, C)."""
    _, h, w = feat.shape
    idx, wts = bilinear_indices(coords, h, w)
    return np.einsum("nk,nkc->nc", wts, _as_rows(feat)[idx])


def nearest_sample(feat: np.ndarray, coords: np.ndarray) -> np.ndarray:
    _, h, w = feat.shape
    return _as_rows(feat)[nearest_indices(coords, h, w)]


def make_query_grid(query: np.ndarray, h: int, w: int, hg: int = 3, wg: int = 3) -> QueryGrid:
    """Local LR grid around the LR pixel center nearest to each query coordinate."""
    if hg % 2 == 0 or wg % 2 == 0 or hg < 1 or wg < 1:
        raise ConfigError(f"query grid extents must be odd, got {hg}x{wg}")
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    cy = pixel_centers(h)[nearest_index(query[:, 0], h)]
    cx = pixel_centers(w)[nearest_index(query[:, 1], w)]
    center = np.stack([cy, cx], axis=-1)
    oy, ox = np.meshgrid(
        np.arange(hg) - (hg - 1) // 2, np.arange(wg) - (wg - 1) // 2, indexing="ij"
    )
    offsets = np.stack([oy, ox], axis=-1).reshape(-1, 2).astype(np.float64)
    pitch = np.array([2.0 / h, 2.0 / w])
    coords = np.clip(center[:, None, :] + offsets[None] * pitch, -1.0, 1.0)
    return QueryGrid(center, offsets, coords)


def encoding_frequencies(p: int) -> np.ndarray:
    if p < 1:
        raise ConfigError(f"encoding length must be >= 1, got {p}")
    return np.pi * 2.0 ** np.arange(p)


def pos_encode(delta: np.ndarray, cell: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Sinusoidal encoding of relative offsets with the cell appended.

    ``delta`` and ``cell`` are (..., 2); output is (..., 4p + 2) ordered as
    ``[sin(f1 dy), cos(f1 dy), sin(f1 dx), cos(f1 dx), ..., cell_h, cell_w]``.
    """
    delta = np.asarray(delta, dtype=np.float64)
    ang = delta[..., None, :] * freqs[:, None]  # (..., p, 2)
    enc = np.stack(
        [np.sin(ang[..., 0]), np.cos(ang[..., 0]), np.sin(ang[..., 1]), np.cos(ang[..., 1])],
        axis=-1,
    ).reshape(*delta.shape[:-1], 4 * len(freqs))
    cell = np.broadcast_to(cell, delta.shape)
    return np.concatenate([enc, cell], axis=-1)
