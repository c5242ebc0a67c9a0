"""Patch synthesis, L1 loss, Adam and the warmup + cosine schedule."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .coords import bilinear_sample, make_coord_grid
from .model import ModelParams, features_nodes, query_nodes
from .tensor import ConfigError, ShapeError


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    epochs: int = 200  # schedule length; one optimizer step per unit at desk scale
    lr_start: float = 1e-5
    lr_peak: float = 1e-4
    lr_floor: float = 1e-6
    warmup: int = 50
    patch: int = 24  # LR patch side; HR crops are round(patch * eta)
    scale_min: float = 1.0
    scale_max: float = 4.0
    samples: int = 576  # coordinate-RGB pairs per patch
    augment: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.warmup >= self.epochs:
            raise ConfigError(f"warmup ({self.warmup}) must be shorter than epochs ({self.epochs})")
        if not 1.0 <= self.scale_min <= self.scale_max:
            raise ConfigError(f"scale bounds must satisfy 1 <= min <= max, got "
                              f"({self.scale_min}, {self.scale_max})")
        if self.batch_size < 1 or self.patch < 1 or self.samples < 1:
            raise ConfigError("batch_size, patch and samples must be positive")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


# The full-scale recipe; desk defaults above are scaled down.
FULL_SCALE_RECIPE = dict(batch_size=32, epochs=1000, patch=48, samples=48 * 48, warmup=50)


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Linear warmup from lr_start to lr_peak, then cosine decay to lr_floor."""
    if epoch < cfg.warmup:
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * epoch / cfg.warmup
    progress = min((epoch - cfg.warmup) / (cfg.epochs - cfg.warmup), 1.0)
    return cfg.lr_floor + (cfg.lr_peak - cfg.lr_floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


# ------------------------------------------------------------------ data


def augment(img: np.ndarray, hflip: bool, vflip: bool, rot: bool) -> np.ndarray:
    if hflip:
        img = img[:, :, ::-1]
    if vflip:
        img = img[:, ::-1, :]
    if rot:
        img = img.transpose(0, 2, 1)
    return np.ascontiguousarray(img)


def bilinear_resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Resample (C, H, W) to (C, h, w) by bilinear interpolation at pixel centers."""
    if img.shape[1:] == (h, w):
        return img.copy()
    coords = make_coord_grid(h, w).coords
    return bilinear_sample(img, coords).T.reshape(img.shape[0], h, w)


@dataclass
class Pair:
    lr: np.ndarray
    coords: np.ndarray
    cells: np.ndarray
    rgb: np.ndarray
    hr: np.ndarray


def synth_pair(
    hr_patch: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    samples: int | None = None,
    flips: tuple[bool, bool, bool] | None = None,
) -> Pair:
    """Derive an LR patch and sampled coordinate-RGB targets from an HR patch.

    ``flips`` fixes the (horizontal, vertical, transpose) augmentation; when
    None each is drawn with probability 1/2 from ``rng``.
    """
    _, s_h, s_w = hr_patch.shape
    if min(s_h, s_w) < math.ceil(eta):
        raise ValueError(f"patch {s_h}x{s_w} is smaller than scale {eta}")
    if flips is None:
        flips = tuple(bool(b) for b in rng.integers(0, 2, size=3))
    hflip, vflip, rot = flips
    if rot and s_h != s_w:
        rot = False
    hr = augment(hr_patch, hflip, vflip, rot)
    _, s_h, s_w = hr.shape
    lr = bilinear_resize(hr, int(s_h // eta), int(s_w // eta))
    total = s_h * s_w
    n = total if samples is None else min(samples, total)
    idx = np.sort(rng.choice(total, size=n, replace=False))
    grid = make_coord_grid(s_h, s_w)
    rgb = hr.reshape(3, -1).T[idx]
    return Pair(lr, grid.coords[idx], grid.cell[idx], rgb, hr)


def random_patch(img: np.ndarray, cfg: TrainConfig, rng: np.random.Generator):
    """Crop an HR patch of side round(patch * eta) (shrunk to fit) -> (patch, eta)."""
    eta = float(rng.uniform(cfg.scale_min, cfg.scale_max))
    _, h, w = img.shape
    side = min(int(round(cfg.patch * eta)), h, w)
    if side < math.ceil(eta):
        raise ValueError(f"image {h}x{w} too small for scale {eta}")
    y = int(rng.integers(0, h - side + 1))
    x = int(rng.integers(0, w - side + 1))
    return img[:, y:y + side, x:x + side], eta


# ------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns new (params, state); inputs are untouched."""
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        if state.m[k].shape != p.shape:
            raise ShapeError(f"optimizer state for {k} has shape {state.m[k].shape}, param {p.shape}")
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(t, new_m, new_v)


# -------------------------------------------------------------- training


def batch_loss_and_grads(params: ModelParams, batch: Sequence[Pair]):
    tape = ad.Tape()
    P = {k: tape.param(k, v) for k, v in params.tensors.items()}
    cfg = params.config
    losses = []
    for pair in batch:
        feat = features_nodes(pair.lr, P, cfg)
        pred = query_nodes(pair.lr, feat, pair.coords, pair.cells, P, cfg)
        losses.append(ad.l1_loss(pred, pair.rgb))
    loss = ad.scale(ad.sum(ad.concat(losses)), 1.0 / len(losses))
    return float(loss.value), tape.backward(loss)


def sample_batch(images: Sequence[np.ndarray], cfg: TrainConfig, rng: np.random.Generator):
    batch = []
    for _ in range(cfg.batch_size):
        img = images[int(rng.integers(len(images)))]
        patch, eta = random_patch(img, cfg, rng)
        flips = None if cfg.augment else (False, False, False)
        batch.append(synth_pair(patch, eta, rng, samples=cfg.samples, flips=flips))
    return batch


def train(
    params: ModelParams,
    images: Sequence[np.ndarray],
    cfg: TrainConfig,
    steps: int | None = None,
    callback: Callable[[int, float, float], None] | None = None,
    fixed_batch: Sequence[Pair] | None = None,
) -> tuple[ModelParams, list[float]]:
    """Run the optimizer for ``steps`` (default: cfg.epochs). Returns (params, losses)."""
    rng = np.random.default_rng(cfg.seed)
    params = params.copy()
    state = AdamState.zeros(params.tensors)
    losses = []
    for step in range(cfg.epochs if steps is None else steps):
        lr = lr_at(step, cfg)
        batch = fixed_batch if fixed_batch is not None else sample_batch(images, cfg, rng)
        loss, grads = batch_loss_and_grads(params, batch)
        params.tensors, state = adam_step(params.tensors, grads, state, lr,
                                          cfg.beta1, cfg.beta2, cfg.eps)
        params.iteration += 1
        losses.append(loss)
        if callback is not None:
            callback(step, loss, lr)
    return params, losses
