"""Matplotlib figures written next to the text reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import CATEGORIES  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curves(log, path: str | Path) -> Path:
    """Train loss (left) and validation scores per epoch (right)."""
    epochs = [r.epoch for r in log]
    with plt.rc_context(RC):
        fig, (ax_loss, ax_score) = plt.subplots(1, 2, figsize=(7.5, 2.8))
        ax_loss.plot(epochs, [r.train_loss for r in log], color="k", lw=1.2)
        ax_loss.set_yscale("log")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss")
        ax_score.plot(epochs, [100 * r.valid_intent_accuracy for r in log], label="intent acc.")
        ax_score.plot(epochs, [100 * r.valid_slot_f1 for r in log], label="slot F1")
        ax_score.plot(epochs, [100 * r.avg_score for r in log], label="average", ls="--", color="k", lw=0.8)
        best = max(log, key=lambda r: (r.avg_score, -r.epoch))
        ax_score.axvline(best.epoch, color="grey", lw=0.6, ls=":")
        ax_score.set_xlabel("epoch")
        ax_score.set_ylabel("validation (%)")
        ax_score.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def grid_heatmap(results, path: str | Path) -> Path:
    lrs = sorted({r.learning_rate for r in results})
    lams = sorted({r.lam for r in results})
    grid = np.full((len(lrs), len(lams)), np.nan)
    for r in results:
        grid[lrs.index(r.learning_rate), lams.index(r.lam)] = 100 * r.avg_score
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(3.0, 0.35 * len(lams) + 1.5), max(2.0, 0.35 * len(lrs) + 1.0)))
        im = ax.imshow(grid, aspect="auto", cmap="viridis", origin="lower")
        ax.set_xticks(range(len(lams)), [f"{x:g}" for x in lams], rotation=90)
        ax.set_yticks(range(len(lrs)), [f"{x:g}" for x in lrs])
        ax.set_xlabel("lambda")
        ax.set_ylabel("learning rate")
        fig.colorbar(im, ax=ax, label="best valid avg (%)")
        return _save(fig, path)


def error_counts(counts: dict[str, int], path: str | Path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.5, 2.4))
        values = [counts.get(c, 0) for c in CATEGORIES]
        ax.bar(CATEGORIES, values, color="0.4")
        for i, v in enumerate(values):
            ax.text(i, v, str(v), ha="center", va="bottom", fontsize=8)
        ax.set_ylabel("# errors")
        return _save(fig, path)


def seed_summary(rows: Sequence[dict], metrics: Sequence[str], path: str | Path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 2.6))
        x = np.arange(len(metrics))
        vals = np.array([[100 * r[m] for m in metrics] for r in rows])
        ax.bar(x, vals.mean(axis=0), yerr=vals.std(axis=0, ddof=1) if len(rows) > 1 else None,
               color="0.75", capsize=3)
        for col in range(len(metrics)):
            ax.scatter(np.full(len(rows), x[col]), vals[:, col], s=8, color="k", zorder=3)
        ax.set_xticks(x, [m.replace("_", " ") for m in metrics])
        ax.set_ylabel("%")
        return _save(fig, path)
