"""Figure rendering for the report paths.

Each CLI report that writes a CSV also renders a matching PNG here.
Figures are file outputs only; no interactive backends.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "save_curve_figure",
    "save_training_curves",
    "save_density_figure",
    "save_sweep_curves",
]


def save_curve_figure(sweep, curve, path):
    """Plot delta, delta/c, g, and -ln g from a curve_sweep table."""
    xs = sweep[:, 0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(xs, sweep[:, 1], label="delta")
    ax1.plot(xs, sweep[:, 2], label="delta / c", linestyle="--")
    ax1.set_xlabel("margin")
    ax1.set_ylabel("gradient magnitude")
    ax1.legend()
    ax2.plot(xs, sweep[:, 3], label="g")
    ax2.plot(xs, sweep[:, 4], label="-ln g", linestyle="--")
    ax2.set_xlabel("margin")
    ax2.legend()
    fig.suptitle(f"preference curve a={curve.a} b={curve.b} c={curve.c}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(reports, path, k=50):
    """Recall/NDCG training curves per split from MetricReport rows."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split in ("val", "test"):
        rows = [r for r in reports if r.split == split]
        if not rows:
            continue
        epochs = [r.epoch for r in rows]
        ax1.plot(epochs, [r.recall for r in rows], marker=".", label=split)
        ax2.plot(epochs, [r.ndcg for r in rows], marker=".", label=split)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel(f"Recall@{k}")
    ax1.legend()
    ax2.set_xlabel("epoch")
    ax2.set_ylabel(f"NDCG@{k}")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_density_figure(tn_density, fn_density, kl, path):
    """Overlay the true/false-negative score densities."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(tn_density.grid, tn_density.density, label="true negatives")
    ax.plot(fn_density.grid, fn_density.density, label="false negatives")
    ax.set_xlabel("model score")
    ax.set_ylabel("density")
    ax.set_title(f"KL divergence = {kl:.5f}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_curves(labelled_sweeps, path):
    """Overlay delta/c curves for the cells of a parameter sweep."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, table in labelled_sweeps:
        ax.plot(table[:, 0], table[:, 2], label=label)
    ax.set_xlabel("margin")
    ax.set_ylabel("delta / c")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
