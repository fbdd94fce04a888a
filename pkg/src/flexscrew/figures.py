"""Matplotlib figures written next to the CSV/text outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 200,
}

# PNG metadata without the matplotlib version keeps reruns byte-identical
_META = {"Software": None}


def _size(scale=1.0, width_in=5.0):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return width_in * scale, width_in * scale * golden


def plot_overlay(curves, path, experimental=None):
    """Model curves as lines, an optional experimental curve as markers."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        for c in curves:
            ax.plot(c.displacement, c.force, lw=1.4, label=c.label or None)
        if experimental is not None:
            ax.plot(
                experimental.displacement, experimental.force, "ko", ms=4, mfc="none",
                label=experimental.label or "experiment",
            )
        ax.set_xlabel("Tip displacement (mm)")
        ax.set_ylabel("Force (N)")
        ax.set_xlim(left=0)
        ax.set_ylim(bottom=0)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)


def plot_metrics(reports, path):
    """Grouped bars of MAE and RMSE per material."""
    labels = [r.label for r in reports]
    x = np.arange(len(reports))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        ax.bar(x - 0.18, [r.mae for r in reports], 0.36, label="MAE")
        ax.bar(x + 0.18, [r.rmse for r in reports], 0.36, label="RMSE")
        ax.set_xticks(x, labels)
        ax.set_xlabel("Young's modulus XY/Z (GPa)")
        ax.set_ylabel("Error (N)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
