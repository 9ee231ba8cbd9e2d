"""Matplotlib renderings of run outputs, written next to the CSV/JSON they
are derived from. Figures are diagnostics only; nothing downstream reads
them back."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_training_curves(rows, path: str | Path, title: str = "") -> None:
    """Loss and validation-MRR curves from the per-epoch metric rows."""
    epochs = [r.epoch for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(epochs, [r.train_loss for r in rows], color="tab:red", lw=1.2)
    ax1.set_ylabel("train loss")
    ax1.grid(True, alpha=0.3)
    if title:
        ax1.set_title(title)

    val_pts = [(r.epoch, r.val_mrr_running) for r in rows if r.val_mrr_running is not None]
    ens_pts = [(r.epoch, r.val_mrr_ensemble) for r in rows if r.val_mrr_ensemble is not None]
    if val_pts:
        ax2.plot(*zip(*val_pts), label="running model", color="tab:blue", lw=1.2)
    if ens_pts:
        ax2.plot(*zip(*ens_pts), label="ensemble", color="tab:green", lw=1.2)
    if val_pts or ens_pts:
        ax2.legend(loc="lower right")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation MRR")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_rank_histogram(ranks, path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ranks, bins=min(50, max(int(max(ranks)), 2)), color="tab:blue", alpha=0.8)
    ax.set_xlabel("filtered rank")
    ax.set_ylabel("queries")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_qtype_mrr(per_type: dict, path: str | Path, title: str = "") -> None:
    """Bar chart of MRR per query type from an {qtype: report-dict} map."""
    qtypes = list(per_type.keys())
    mrrs = [per_type[q]["mrr"] for q in qtypes]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(qtypes, mrrs, color="tab:purple", alpha=0.85)
    ax.set_ylabel("MRR")
    ax.set_ylim(0, 1)
    if title:
        ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
