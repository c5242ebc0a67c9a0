"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def save_fem_figure(emap: np.ndarray, path, title: str = "frequency error") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    top = float(emap.max()) or 1.0
    im = ax.imshow(emap, cmap="RdYlGn_r", vmin=0.0, vmax=top, interpolation="nearest")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="|log-magnitude difference|")
    fig.tight_layout()
    _save(fig, path)


def save_loss_curve(losses, lrs, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    steps = np.arange(len(losses))
    ax.plot(steps, losses, color="tab:blue", lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("L1 loss", color="tab:blue")
    ax.set_yscale("log")
    ax2 = ax.twinx()
    ax2.plot(steps, lrs, color="tab:orange", lw=1.0, ls="--")
    ax2.set_ylabel("learning rate", color="tab:orange")
    fig.tight_layout()
    _save(fig, path)


def save_psnr_by_scale(scales, means, path, label: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(scales, means, marker="o", lw=1.2, label=label or None)
    for s, m in zip(scales, means):
        ax.annotate(f"{m:.2f}", (s, m), textcoords="offset points", xytext=(0, 6),
                    ha="center", fontsize=8)
    ax.set_xlabel("scale")
    ax.set_ylabel("mean PSNR (dB)")
    if label:
        ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
