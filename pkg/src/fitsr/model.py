"""Full arbitrary-scale pipeline: encoder, frequency blocks, dual attention, decoder.

The output at every HR coordinate is a decoded RGB residual added to the
bilinear upsampling of the LR input.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .coords import bilinear_sample, cell_for_scale, make_coord_grid, nearest_indices
from .fcsa import FcsaParams, attention_nodes, check_tokens
from .fim import FimParams, fim_nodes
from .iisa import IisaConfig, IisaParams, attend_nodes, maps_nodes
from .tensor import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 16
    encoder_depth: int = 4
    fim_blocks: int = 2
    subspaces: int = 4
    all_spatial: bool = False
    heads: int = 8
    enc_len: int = 10
    grid_h: int = 3
    grid_w: int = 3
    pe_hidden: int = 64
    decoder_hidden: int = 64
    decoder_depth: int = 2
    max_tokens: int = 4096

    def __post_init__(self):
        if self.channels < 1 or self.encoder_depth < 1 or self.fim_blocks < 0:
            raise ConfigError("channels and encoder_depth must be >= 1, fim_blocks >= 0")
        if self.decoder_depth < 0 or self.decoder_hidden < 1:
            raise ConfigError("decoder_depth must be >= 0 and decoder_hidden >= 1")
        self.iisa  # validates divisibility and grid extents

    @property
    def iisa(self) -> IisaConfig:
        return IisaConfig(
            channels=self.channels,
            subspaces=self.subspaces,
            heads=self.heads,
            enc_len=self.enc_len,
            grid=(self.grid_h, self.grid_w),
            pe_hidden=self.pe_hidden,
            all_spatial=self.all_spatial,
        )

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)


def tiny_config(**kw) -> ModelConfig:
    """Smallest configuration used by gradient checks (C=8)."""
    base = dict(channels=8, encoder_depth=2, fim_blocks=1, subspaces=4, heads=8,
                pe_hidden=16, decoder_hidden=16, decoder_depth=2)
    base.update(kw)
    return ModelConfig(**base)


def _uniform(rng, shape, fan_in):
    b = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-b, b, shape)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    seed: int = 0

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        c = config.channels
        t: dict[str, np.ndarray] = {}
        t["enc.0.w"] = _uniform(rng, (c, 3, 3, 3), 27)
        t["enc.0.b"] = np.zeros(c)
        for i in range(1, config.encoder_depth):
            t[f"enc.{i}.w"] = _uniform(rng, (c, c, 3, 3), 9 * c)
            t[f"enc.{i}.b"] = np.zeros(c)
        for k in range(config.fim_blocks):
            for name, v in FimParams.init(c, rng).as_dict().items():
                t[f"fim{k}.{name}"] = v
        for name, v in IisaParams.init(config.iisa, rng).as_dict().items():
            t[f"iisa.{name}"] = v
        t["fcsa.qkv"] = FcsaParams.init(c, rng).qkv
        widths = [c] + [config.decoder_hidden] * config.decoder_depth + [3]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            t[f"dec.{i}.w"] = _uniform(rng, (b, a), a)
            t[f"dec.{i}.b"] = np.zeros(b)
        return cls(config, t, 0, seed)

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in ModelParams.init(self.config, 0).tensors.items()}

    def validate(self) -> None:
        want = self.expected_shapes()
        if set(want) != set(self.tensors):
            missing = sorted(set(want) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(want))
            raise ConfigError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
        for k, shape in want.items():
            if self.tensors[k].shape != shape:
                raise ConfigError(f"parameter {k} has shape {self.tensors[k].shape}, expected {shape}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()},
                           self.iteration, self.seed)

    def zero(self, prefix: str) -> "ModelParams":
        """Copy with every tensor under ``prefix`` set to zero."""
        out = self.copy()
        for k in out.tensors:
            if k.startswith(prefix):
                out.tensors[k] = np.zeros_like(out.tensors[k])
        return out


def sub(mapping, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in mapping.items() if k.startswith(prefix)}


# ------------------------------------------------------------------ nodes


def encoder_nodes(img, P, cfg: ModelConfig):
    z = ad.conv2d(img, P["enc.0.w"], P["enc.0.b"])
    for i in range(1, cfg.encoder_depth):
        z = ad.add(z, ad.conv2d(ad.relu(z), P[f"enc.{i}.w"], P[f"enc.{i}.b"]))
    return z


def decoder_nodes(z, P, cfg: ModelConfig):
    n_layers = cfg.decoder_depth + 1
    for i in range(n_layers):
        z = ad.linear(z, P[f"dec.{i}.w"], P[f"dec.{i}.b"])
        if i < n_layers - 1:
            z = ad.relu(z)
    return z


@dataclass
class Features:
    """Per-image quantities shared by every HR query."""

    z_fim: object
    q_map: object
    v_map: object
    global_rows: object  # (N, C) attended map with skip
    shape: tuple[int, int]


def features_nodes(img, P, cfg: ModelConfig) -> Features:
    _, h, w = img.shape
    check_tokens(h, w, cfg.max_tokens)
    z = encoder_nodes(img, P, cfg)
    for k in range(cfg.fim_blocks):
        z = ad.add(z, fim_nodes(z, sub(P, f"fim{k}.")))
    q_map, v_map = maps_nodes(z, sub(P, "iisa."), cfg.iisa)
    _, rows = attention_nodes(z, sub(P, "fcsa."))
    return Features(z, q_map, v_map, rows, (h, w))


def fusam_nodes(feat: Features, queries: np.ndarray, cells: np.ndarray, P, cfg: ModelConfig):
    h, w = feat.shape
    local, _ = attend_nodes(feat.q_map, feat.v_map, queries, cells, sub(P, "iisa."), cfg.iisa)
    # the query grid center is the LR pixel nearest to the query
    idx = nearest_indices(queries, h, w)[:, None]
    global_ = ad.gather(feat.global_rows, idx, np.ones(idx.shape))
    return ad.add(local, global_)


def query_nodes(img_lr: np.ndarray, feat: Features, queries, cells, P, cfg: ModelConfig):
    """RGB prediction (n, 3) at HR coordinates: decoded residual + bilinear base."""
    residual = decoder_nodes(fusam_nodes(feat, queries, cells, P, cfg), P, cfg)
    return ad.add(residual, bilinear_sample(img_lr, queries))


def bind(params: ModelParams, record: bool = False):
    tape = ad.Tape(record=record)
    return tape, {k: tape.param(k, v) for k, v in params.tensors.items()}


# ----------------------------------------------------------------- public


def encoder_forward(img: np.ndarray, params: ModelParams) -> np.ndarray:
    tape, P = bind(params)
    return encoder_nodes(tape.param("img", img), P, params.config).value


def decoder_forward(z: np.ndarray, params: ModelParams) -> np.ndarray:
    tape, P = bind(params)
    return decoder_nodes(tape.param("z", np.atleast_2d(z)), P, params.config).value


def fim_stack_forward(z_in: np.ndarray, params: ModelParams) -> np.ndarray:
    """Encoder features after every frequency block and its skip."""
    tape, P = bind(params)
    z = tape.param("z", z_in)
    for k in range(params.config.fim_blocks):
        z = ad.add(z, fim_nodes(z, sub(P, f"fim{k}.")))
    return z.value


def fusam_forward(z_fim: np.ndarray, queries, cells, params: ModelParams) -> np.ndarray:
    """Sum of local and global attention branches at each query -> (n, C)."""
    cfg = params.config
    tape, P = bind(params)
    z = tape.param("z", z_fim)
    q_map, v_map = maps_nodes(z, sub(P, "iisa."), cfg.iisa)
    _, rows = attention_nodes(z, sub(P, "fcsa."))
    feat = Features(z, q_map, v_map, rows, z_fim.shape[1:])
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    cells = np.broadcast_to(np.asarray(cells, dtype=np.float64), queries.shape)
    return fusam_nodes(feat, queries, cells, P, cfg).value


def output_size(h: int, w: int, eta_h: float, eta_w: float) -> tuple[int, int]:
    return int(round(eta_h * h)), int(round(eta_w * w))


def fit_forward(
    img_lr: np.ndarray, eta_h: float, eta_w: float, params: ModelParams, chunk: int = 4096
) -> np.ndarray:
    """Super-resolve a (3, H, W) image by (eta_h, eta_w) -> (3, round(eta_h H), round(eta_w W))."""
    if eta_h < 1 or eta_w < 1:
        raise ValueError(f"scale factors must be >= 1, got ({eta_h}, {eta_w})")
    cfg = params.config
    _, h, w = img_lr.shape
    ho, wo = output_size(h, w, eta_h, eta_w)
    tape, P = bind(params)
    feat = features_nodes(tape.param("img", img_lr), P, cfg)
    coords = make_coord_grid(ho, wo).coords
    cells = np.tile(cell_for_scale(eta_h, eta_w, h, w), (coords.shape[0], 1))
    out = np.empty((coords.shape[0], 3))
    for s in range(0, coords.shape[0], chunk):
        e = s + chunk
        out[s:e] = query_nodes(img_lr, feat, coords[s:e], cells[s:e], P, cfg).value
    return out.T.reshape(3, ho, wo)


def config_fields() -> list[str]:
    return [f.name for f in fields(ModelConfig)]
