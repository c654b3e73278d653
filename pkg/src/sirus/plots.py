"""Figure rendering for tuning fronts and benchmark summaries.

Figures are written next to their CSV counterparts; the CSV stays the
primary machine-readable output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .tuning import IDEAL_STABILITY, ParetoPoint


def save_pareto_plot(points: list[ParetoPoint], chosen_p0: float, path) -> None:
    """Stability-versus-error front with the ideal point and chosen threshold."""
    errors = np.array([pt.error for pt in points])
    stabilities = np.array([pt.stability for pt in points])
    chosen = [pt for pt in points if pt.p0 == chosen_p0]

    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.scatter(errors, stabilities, s=14, c="steelblue", alpha=0.6,
               label="candidate thresholds")
    if chosen:
        ax.scatter([pt.error for pt in chosen], [pt.stability for pt in chosen],
                   s=50, c="forestgreen", zorder=3, label="selected threshold")
    ax.scatter([0.0], [IDEAL_STABILITY], marker="*", s=120, c="firebrick",
               zorder=3, label="ideal point")
    ax.set_xlabel("unexplained variance")
    ax.set_ylabel("stability")
    ax.set_title("Stability / error front over selection thresholds")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_size_curves_plot(points: list[ParetoPoint], path) -> None:
    """Error and stability as functions of the model size."""
    sizes = np.array([pt.size for pt in points])
    errors = np.array([pt.error for pt in points])
    stabilities = np.array([pt.stability for pt in points])
    order = np.argsort(sizes)

    fig, axes = plt.subplots(2, 1, figsize=(5.5, 7), sharex=True)
    axes[0].plot(sizes[order], errors[order], ".", c="steelblue", alpha=0.6)
    axes[0].set_ylabel("unexplained variance")
    axes[1].plot(sizes[order], stabilities[order], ".", c="darkorange", alpha=0.6)
    axes[1].set_ylabel("stability")
    axes[1].set_xlabel("number of rules")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_benchmark_plot(rows: list[dict], path) -> None:
    """Per-dataset error bars for each evaluated method."""
    datasets = sorted({row["dataset"] for row in rows})
    methods = sorted({row["method"] for row in rows})
    width = 0.8 / max(len(methods), 1)

    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(datasets), 4.5))
    base = np.arange(len(datasets))
    for m, method in enumerate(methods):
        values = []
        for name in datasets:
            matches = [r["error"] for r in rows
                       if r["dataset"] == name and r["method"] == method]
            values.append(matches[0] if matches else np.nan)
        ax.bar(base + m * width, values, width=width, label=method)
    ax.set_xticks(base + width * (len(methods) - 1) / 2)
    ax.set_xticklabels(datasets, rotation=30, ha="right")
    ax.set_ylabel("unexplained variance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
