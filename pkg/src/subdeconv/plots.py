"""Figure rendering for report directories.

Figures are written next to the delimited outputs: the Hinton-style
magnitude diagram of the demixing-times-mixing product, and the log-log
error curve against sample size.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .model import BlockStructure


def save_hinton_figure(g: np.ndarray, blocks: BlockStructure, path: str) -> None:
    """Hinton diagram of ``|G|`` with block-boundary grid lines.

    Square area encodes magnitude relative to the largest entry; a clean
    block-permutation structure shows as one dense block per block row.
    """
    a = np.abs(np.asarray(g, dtype=float))
    peak = a.max()
    if peak > 0:
        a = a / peak
    n_rows, n_cols = a.shape
    fig, ax = plt.subplots(figsize=(max(3.0, n_cols / 4), max(3.0, n_rows / 4)))
    ax.set_facecolor("gray")
    for i in range(n_rows):
        for j in range(n_cols):
            side = np.sqrt(a[i, j])
            if side <= 0:
                continue
            ax.add_patch(
                Rectangle(
                    (j + 0.5 - side / 2, n_rows - 1 - i + 0.5 - side / 2),
                    side,
                    side,
                    facecolor="white",
                    edgecolor="none",
                )
            )
    edges = np.cumsum((0,) + blocks.dims)
    for e in edges:
        ax.axvline(e, color="black", linewidth=0.8)
        ax.axhline(n_rows - e, color="black", linewidth=0.8)
    ax.set_xlim(0, n_cols)
    ax.set_ylim(0, n_rows)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_aspect("equal")
    ax.set_title("|demixing x mixing|, block grid")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curve_figure(sample_sizes, means, stds, slope, path: str) -> None:
    """Log-log error curve with one-sigma band and fitted power law."""
    t = np.asarray(sample_sizes, dtype=float)
    m = np.asarray(means, dtype=float)
    s = np.asarray(stds, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.errorbar(t, m, yerr=s, fmt="o-", capsize=3, label="mean Amari index")
    if slope is not None and np.all(m > 0):
        start = int(np.argmax(m))
        anchor_t, anchor_m = t[start], m[start]
        tt = np.linspace(t[start], t[-1], 50)
        ax.plot(
            tt,
            anchor_m * (tt / anchor_t) ** (-slope),
            "--",
            label=f"fit: T^-{slope:.2f}",
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sample count T")
    ax.set_ylabel("Amari index")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
