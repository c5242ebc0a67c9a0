"""Slow scalar-loop reference implementations.

These exist to cross-check the vectorized code paths and share none of
their machinery: plain Python loops, direct (non-fast) Fourier sums and
brute-force nearest-pixel searches.
"""

from __future__ import annotations

import math

import numpy as np


def naive_dft2(f, inverse: bool = False) -> np.ndarray:
    """Direct double sum with 1/sqrt(MN) normalization.

    The sum over (x, y) is evaluated as two explicit exponential-kernel
    matrix products, O(M^2 N + M N^2); no fast transform is involved.
    """
    f = np.asarray(f, dtype=np.complex128)
    m, n = f.shape
    sign = 1.0 if inverse else -1.0
    um = np.outer(np.arange(m), np.arange(m)) % m
    vn = np.outer(np.arange(n), np.arange(n)) % n
    km = np.exp(sign * 2j * np.pi * um / m)
    kn = np.exp(sign * 2j * np.pi * vn / n)
    return (km @ f @ kn.T) / math.sqrt(m * n)


def naive_matmul(a, b) -> np.ndarray:
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
            out[i, j] = acc
    return out


def _center(i: int, n: int) -> float:
    return -1.0 + (2 * i + 1) / n


def _nearest(c: float, n: int) -> int:
    # first minimum wins, so ties go to the lower index
    best, best_d = 0, math.inf
    for i in range(n):
        d = abs(c - _center(i, n))
        if d < best_d - 1e-15:
            best, best_d = i, d
    return best


def _bilinear(fmap, y: float, x: float) -> np.ndarray:
    c, h, w = fmap.shape
    out = np.zeros(c)
    ty = min(max(((y + 1) * h - 1) / 2, 0.0), h - 1.0)
    tx = min(max(((x + 1) * w - 1) / 2, 0.0), w - 1.0)
    for ch in range(c):
        acc = 0.0
        for r in range(h):
            wy = max(0.0, 1.0 - abs(ty - r))
            if wy == 0.0:
                continue
            for s in range(w):
                wx = max(0.0, 1.0 - abs(tx - s))
                acc += wy * wx * fmap[ch, r, s]
        out[ch] = acc
    return out


def _softmax(xs):
    m = max(xs)
    es = [math.exp(v - m) for v in xs]
    tot = sum(es)
    return [e / tot for e in es]


def _mlp(x, layers):
    for li, (w, b) in enumerate(layers):
        y = [sum(w[o][i] * x[i] for i in range(len(x))) + b[o] for o in range(len(b))]
        x = [max(v, 0.0) for v in y] if li < len(layers) - 1 else y
    return x


def iisa_attend(q_map, v_map, query, cell, pe_layers, heads: int, grid=(3, 3), enc_len: int = 10):
    """Local multi-head attention for a single query coordinate -> (C,)."""
    c, h, w = q_map.shape
    y, x = float(query[0]), float(query[1])
    cy, cx = _center(_nearest(y, h), h), _center(_nearest(x, w), w)
    q_hat = _bilinear(q_map, y, x)
    keys, vals, encs = [], [], []
    for a in range(grid[0]):
        for b in range(grid[1]):
            gy = min(max(cy + (a - grid[0] // 2) * 2.0 / h, -1.0), 1.0)
            gx = min(max(cx + (b - grid[1] // 2) * 2.0 / w, -1.0), 1.0)
            keys.append(_bilinear(q_map, gy, gx))
            vals.append(v_map[:, _nearest(gy, h), _nearest(gx, w)])
            dy, dx = y - gy, x - gx
            e = []
            for k in range(enc_len):
                phi = math.pi * 2**k
                e += [math.sin(phi * dy), math.cos(phi * dy), math.sin(phi * dx), math.cos(phi * dx)]
            e += [float(cell[0]), float(cell[1])]
            encs.append(_mlp(e, pe_layers))
    d = c // heads
    scale = math.sqrt(c / heads)
    out = np.zeros(c)
    for mu in range(heads):
        sl = range(mu * d, (mu + 1) * d)
        logits = [
            encs[j][mu] + sum(q_hat[i] * keys[j][i] for i in sl) / scale for j in range(len(keys))
        ]
        att = _softmax(logits)
        for i in sl:
            out[i] = sum(att[j] * vals[j][i] for j in range(len(vals)))
    return out


def fcsa_forward(z, qkv, query) -> np.ndarray:
    """Global frequency-correlation attention read at the LR pixel nearest ``query`` -> (C,)."""
    c, h, w = z.shape
    n = h * w
    proj = np.zeros((3 * c, h, w))
    for o in range(3 * c):
        for r in range(h):
            for s in range(w):
                proj[o, r, s] = sum(qkv[o][i] * z[i, r, s] for i in range(c))
    fq = [naive_dft2(proj[i]) for i in range(c)]
    fk = [naive_dft2(proj[c + i]) for i in range(c)]
    corr = np.zeros((n, n), dtype=np.complex128)
    for u in range(n):
        for j in range(n):
            corr[u, j] = sum(fq[i][u // w, u % w] * fk[i][j // w, j % w] for i in range(c))
    scores = np.zeros((n, n))
    for j in range(n):
        back = naive_dft2(corr[:, j].reshape(h, w), inverse=True)
        for xpos in range(n):
            scores[xpos, j] = back[xpos // w, xpos % w].real / math.sqrt(c)
    r = _nearest(float(query[0]), h) * w + _nearest(float(query[1]), w)
    att = _softmax(list(scores[r]))
    out = np.zeros(c)
    for i in range(c):
        out[i] = sum(att[j] * proj[2 * c + i, j // w, j % w] for j in range(n)) + z[i, r // w, r % w]
    return out
