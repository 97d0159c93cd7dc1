"""Figure rendering for the report path (PNG files next to the data files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_results_bar(table, path) -> None:
    """Mean top-1 per method with a std error bar."""
    rows = table.rows
    labels = [r.label for r in rows]
    means = [r.mean for r in rows]
    stds = [r.std for r in rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(rows)), 4.0))
    xs = np.arange(len(rows))
    ax.bar(xs, means, yerr=stds, capsize=3, color="#4878cf")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("top-1 (%)")
    lo = min(means) - max(max(stds), 0.5) - 1.0
    ax.set_ylim(max(0.0, lo), min(100.0, max(means) + max(max(stds), 0.5) + 1.0))
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def render_training_curves(curves: list[tuple[str, list[float]]], path) -> None:
    """Test top-1 per epoch, one line per method (seed-averaged)."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for label, values in curves:
        ax.plot(range(len(values)), values, label=label, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("test top-1 (%)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def render_matrix_heatmap(matrix: np.ndarray, path, title: str = "") -> None:
    """Signed heatmap of a class-by-class matrix, symmetric color range."""
    matrix = np.asarray(matrix, dtype=np.float64)
    vmax = float(np.abs(matrix).max()) or 1e-12
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(matrix, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xlabel("class")
    ax.set_ylabel("true class")
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)
