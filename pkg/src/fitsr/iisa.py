"""Interaction implicit self-attention.

The query map fuses alternating spatial and frequency subspace projections;
each HR query then attends over a small LR grid around its nearest LR pixel,
with a positional bias computed from the relative offset and the cell size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .coords import (
    bilinear_indices,
    encoding_frequencies,
    make_query_grid,
    nearest_indices,
    pos_encode,
)
from .fim import FimParams, fim_nodes
from .tensor import ConfigError

ALLOWED_SUBSPACES = (0, 2, 4, 8, 16)


@dataclass(frozen=True)
class IisaConfig:
    channels: int = 16
    subspaces: int = 4
    heads: int = 8
    enc_len: int = 10
    grid: tuple[int, int] = (3, 3)
    pe_hidden: int = 64
    all_spatial: bool = False

    def __post_init__(self):
        c, s, h = self.channels, self.subspaces, self.heads
        if s < 0 or s % 2:
            raise ConfigError(f"subspace count must be even, got {s}")
        if s and c % s:
            raise ConfigError(f"subspace count {s} does not divide channels {c}")
        if h < 1 or c % h:
            raise ConfigError(f"head count {h} does not divide channels {c}")
        if any(g % 2 == 0 or g < 1 for g in self.grid):
            raise ConfigError(f"query grid extents must be odd, got {self.grid}")
        # attention temperature sqrt(d_k / H) is the per-head width
        assert np.isclose(self.temperature, np.sqrt(self.head_dim))

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads

    @property
    def temperature(self) -> float:
        return float(np.sqrt(self.channels / self.heads))

    @property
    def kinds(self) -> list[str]:
        """Subspace order: spatial, frequency, spatial, ... (all spatial if requested)."""
        return [
            "spatial" if (i % 2 == 0 or self.all_spatial) else "freq"
            for i in range(self.subspaces)
        ]

    @property
    def pe_width(self) -> int:
        return 4 * self.enc_len + 2


@dataclass
class IisaParams:
    fim: FimParams
    spatial: list[np.ndarray]  # each (C/s, C)
    freq: list[np.ndarray]  # each (C/s, 2C)
    fuse: np.ndarray
    fuse_bias: np.ndarray
    value: np.ndarray
    value_bias: np.ndarray
    pe_w1: np.ndarray
    pe_b1: np.ndarray
    pe_w2: np.ndarray
    pe_b2: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        d = {f"fim.{k}": v for k, v in self.fim.as_dict().items()}
        d.update({f"sp{i}": w for i, w in enumerate(self.spatial)})
        d.update({f"fq{i}": w for i, w in enumerate(self.freq)})
        for name in ("fuse", "fuse_bias", "value", "value_bias", "pe_w1", "pe_b1", "pe_w2", "pe_b2"):
            d[name] = getattr(self, name)
        return d

    @classmethod
    def from_mapping(cls, m) -> "IisaParams":
        fim = FimParams.from_mapping({k[4:]: v for k, v in m.items() if k.startswith("fim.")})
        sp = [m[k] for k in sorted((k for k in m if k.startswith("sp")), key=lambda k: int(k[2:]))]
        fq = [m[k] for k in sorted((k for k in m if k.startswith("fq")), key=lambda k: int(k[2:]))]
        rest = {k: m[k] for k in ("fuse", "fuse_bias", "value", "value_bias", "pe_w1", "pe_b1", "pe_w2", "pe_b2")}
        return cls(fim=fim, spatial=sp, freq=fq, **rest)

    @classmethod
    def init(cls, cfg: IisaConfig, rng: np.random.Generator) -> "IisaParams":
        c = cfg.channels
        sub = c // cfg.subspaces if cfg.subspaces else 0
        kinds = cfg.kinds

        def uni(shape, fan_in):
            b = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-b, b, shape)

        fim = FimParams.init(c, rng)
        spatial = [uni((sub, c), c) for k in kinds if k == "spatial"]
        freq = [uni((sub, 2 * c), 2 * c) for k in kinds if k == "freq"]
        return cls(
            fim=fim,
            spatial=spatial,
            freq=freq,
            fuse=uni((c, c), c),
            fuse_bias=np.zeros(c),
            value=uni((c, c), c),
            value_bias=np.zeros(c),
            pe_w1=uni((cfg.pe_hidden, cfg.pe_width), cfg.pe_width),
            pe_b1=np.zeros(cfg.pe_hidden),
            pe_w2=uni((cfg.heads, cfg.pe_hidden), cfg.pe_hidden),
            pe_b2=np.zeros(cfg.heads),
        )


# ------------------------------------------------------------------ nodes


def project_nodes(z, p, cfg: IisaConfig):
    """Subspace projections fused into the query map (C, H, W)."""
    if cfg.subspaces == 0:
        return ad.pconv(z, p["fuse"], p["fuse_bias"])
    maps = []
    spectrum = None
    i_sp = i_fq = 0
    for kind in cfg.kinds:
        if kind == "spatial":
            maps.append(ad.pconv(z, p[f"sp{i_sp}"]))
            i_sp += 1
        else:
            if spectrum is None:
                freq = ad.fft2c(ad.complex_from_real(z))
                c = z.shape[0]
                # (2, C, H, W) -> (2C, H, W): real planes then imaginary planes
                spectrum = ad.reshape(freq, (2 * c,) + z.shape[1:])
            maps.append(ad.pconv(spectrum, p[f"fq{i_fq}"]))
            i_fq += 1
    return ad.pconv(ad.concat(maps, axis=0), p["fuse"], p["fuse_bias"])


def maps_nodes(z_fim, p, cfg: IisaConfig):
    """Inner frequency block, then the query map and the value map."""
    fim_p = {k[4:]: v for k, v in p.items() if k.startswith("fim.")}
    z2 = fim_nodes(z_fim, fim_p)
    q_map = project_nodes(z2, p, cfg)
    v_map = ad.pconv(z2, p["value"], p["value_bias"])
    return q_map, v_map


def _rows(fmap):
    c, h, w = fmap.shape
    return ad.transpose(ad.reshape(fmap, (c, h * w)))


def attend_nodes(q_map, v_map, queries: np.ndarray, cells: np.ndarray, p, cfg: IisaConfig):
    """Multi-head attention over each query's LR grid -> (n, C)."""
    c, h, w = q_map.shape
    n = queries.shape[0]
    heads, d = cfg.heads, cfg.head_dim
    q_rows, v_rows = _rows(q_map), _rows(v_map)

    grid = make_query_grid(queries, h, w, *cfg.grid)
    g = grid.coords.shape[1]
    qi, qw = bilinear_indices(queries, h, w)
    ki, kw = bilinear_indices(grid.coords, h, w)
    vi = nearest_indices(grid.coords, h, w)[..., None]

    q_hat = ad.gather(q_rows, qi, qw)  # (n, C)
    k_hat = ad.gather(q_rows, ki, kw)  # keys come from the query map too
    v_hat = ad.gather(v_rows, vi, np.ones(vi.shape))  # (n, G, C)

    delta = queries[:, None, :] - grid.coords
    enc = pos_encode(delta, np.asarray(cells)[:, None, :], encoding_frequencies(cfg.enc_len))
    hidden = ad.relu(ad.linear(enc, p["pe_w1"], p["pe_b1"]))
    bias = ad.linear(hidden, p["pe_w2"], p["pe_b2"])  # (n, G, heads)

    qh = ad.reshape(q_hat, (n, heads, 1, d))
    kh = ad.transpose(ad.reshape(k_hat, (n, g, heads, d)), (0, 2, 3, 1))
    scores = ad.reshape(ad.matmul(qh, kh), (n, heads, g))
    logits = ad.add(ad.transpose(bias, (0, 2, 1)), ad.scale(scores, 1.0 / cfg.temperature))
    weights = ad.softmax(logits, axis=-1)
    vh = ad.transpose(ad.reshape(v_hat, (n, g, heads, d)), (0, 2, 1, 3))
    out = ad.matmul(ad.reshape(weights, (n, heads, 1, g)), vh)
    return ad.reshape(out, (n, c)), weights


# ----------------------------------------------------------------- public


def _bind(p: IisaParams):
    tape = ad.Tape(record=False)
    return tape, {k: tape.param(k, v) for k, v in p.as_dict().items()}


def project_subspaces(z: np.ndarray, p: IisaParams, cfg: IisaConfig) -> np.ndarray:
    tape, nodes = _bind(p)
    return project_nodes(tape.param("z", z), nodes, cfg).value


def iisa_maps(z_fim: np.ndarray, p: IisaParams, cfg: IisaConfig) -> tuple[np.ndarray, np.ndarray]:
    tape, nodes = _bind(p)
    q, v = maps_nodes(tape.param("z", z_fim), nodes, cfg)
    return q.value, v.value


def iisa_attend(
    q_map: np.ndarray,
    v_map: np.ndarray,
    queries: np.ndarray,
    cells: np.ndarray,
    p: IisaParams,
    cfg: IisaConfig,
    return_weights: bool = False,
):
    """Attend for each query coordinate (n, 2) -> (n, C)."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    cells = np.broadcast_to(np.asarray(cells, dtype=np.float64), queries.shape)
    tape, nodes = _bind(p)
    out, weights = attend_nodes(
        tape.param("q", q_map), tape.param("v", v_map), queries, cells, nodes, cfg
    )
    if return_weights:
        return out.value, weights.value
    return out.value
