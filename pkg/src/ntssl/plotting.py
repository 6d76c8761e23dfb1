"""Report figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def new(ncols: int = 1, width: float = 3.2, height: float = 2.4):
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, height), squeeze=False)
    return fig, axes[0]


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def sampler_diagnostics(rows: list[dict], path: str | Path) -> Path:
    """Mean sampled rank and bag purity against curriculum progress."""
    c = np.array([r["c"] for r in rows])
    fig, (ax_rank, ax_pure) = new(ncols=2)
    ax_rank.plot(c, [r["mean_rank"] for r in rows], marker="o", ms=3, color="tab:blue")
    ax_rank.set_xlabel("curriculum progress c")
    ax_rank.set_ylabel("mean sampled rank")
    ax_pure.plot(c, [r["purity"] for r in rows], marker="o", ms=3, color="tab:red")
    ax_pure.set_xlabel("curriculum progress c")
    ax_pure.set_ylabel("ratio of pure bags")
    ax_pure.set_ylim(0, 1.02)
    return save(fig, path)


def training_curves(rows: list[dict], path: str | Path, window: int = 50) -> Path:
    steps = np.array([r["step"] for r in rows])
    fig, (ax_loss, ax_tau) = new(ncols=2)
    for key, color in (("loss_total", "k"), ("loss_tracklet", "tab:blue"), ("loss_frame", "tab:orange")):
        y = np.array([r[key] for r in rows], dtype=float)
        if np.all(np.isnan(y)):
            continue
        w = min(window, len(y))
        smooth = np.convolve(y, np.ones(w) / w, mode="valid")
        ax_loss.plot(steps[w - 1 :], smooth, color=color, lw=1, label=key.replace("loss_", ""))
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel(f"loss ({window}-step mean)")
    ax_loss.legend(frameon=False)
    ax_tau.plot(steps, [r["tau"] for r in rows], color="tab:green", lw=1)
    ax_tau.set_xlabel("step")
    ax_tau.set_ylabel("sampling temperature")
    purity = np.array([r["purity"] for r in rows], dtype=float)
    if not np.all(np.isnan(purity)):
        twin = ax_tau.twinx()
        w = min(window, len(purity))
        twin.plot(steps[w - 1 :], np.convolve(purity, np.ones(w) / w, mode="valid"), color="tab:red", lw=1)
        twin.set_ylabel("bag purity", color="tab:red")
    return save(fig, path)


def ablation_bars(rows: list[dict], path: str | Path, metrics=("map", "hr@1", "auroc", "aupr")) -> Path:
    metrics = [m for m in metrics if rows and m in rows[0]]
    names = [r["variant"] for r in rows]
    x = np.arange(len(names))
    width = 0.8 / max(len(metrics), 1)
    fig, (ax,) = new(width=max(4.0, 0.9 * len(names)), height=2.8)
    for j, m in enumerate(metrics):
        ax.bar(x + (j - (len(metrics) - 1) / 2) * width, [r[m] for r in rows], width, label=m)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, ncol=len(metrics), loc="lower right")
    return save(fig, path)
