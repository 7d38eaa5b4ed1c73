"""Delimited tables and figures for analysis reports.

Both report paths write a machine-readable table first and render the
matching figure next to it: block sensitivity as a grouped bar chart,
aggregated metrics as one bar group per metric.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InputError
from .injection import BlockSensitivityReport

_BAR_COLORS = ("#4878a8", "#c2803d")


def write_block_table(report: BlockSensitivityReport, path: str | Path) -> Path:
    """One row per block: block index, content score, style score."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = ["block\tcontent_score\tstyle_score"]
    lines += [f"{b}\t{c:.6f}\t{s:.6f}" for b, c, s in report.rows()]
    p.write_text("\n".join(lines) + "\n")
    return p


def plot_block_sensitivity(report: BlockSensitivityReport, path: str | Path) -> Path:
    """Grouped bars of per-block content and style leakage."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    blocks = np.asarray(report.blocks)
    width = 0.4
    fig, ax = plt.subplots(figsize=(8.0, 3.6))
    ax.bar(blocks - width / 2, report.content_scores, width, label="content", color=_BAR_COLORS[0])
    ax.bar(blocks + width / 2, report.style_scores, width, label="style", color=_BAR_COLORS[1])
    ax.set_xlabel("attention block")
    ax.set_ylabel("score")
    ax.set_xticks(blocks)
    ax.set_title(f"Per-block injection sensitivity ({report.n_probes} probes)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return p


def write_metric_table(aggregates: Mapping[str, Mapping[str, float]], path: str | Path) -> Path:
    """Methods as rows, metrics as columns; blank cell where a metric
    never produced a defined value for a method."""
    if not aggregates:
        raise InputError("no aggregated rows to write")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    metrics = sorted({m for bucket in aggregates.values() for m in bucket})
    lines = ["method\t" + "\t".join(metrics)]
    for method in sorted(aggregates):
        cells = [
            f"{aggregates[method][m]:.6f}" if m in aggregates[method] else "" for m in metrics
        ]
        lines.append(method + "\t" + "\t".join(cells))
    p.write_text("\n".join(lines) + "\n")
    return p


def plot_metric_means(aggregates: Mapping[str, Mapping[str, float]], path: str | Path) -> Path:
    """One bar group per metric, one bar per method."""
    if not aggregates:
        raise InputError("no aggregated rows to plot")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    methods = sorted(aggregates)
    metrics = sorted({m for bucket in aggregates.values() for m in bucket})
    fig, axes = plt.subplots(1, max(1, len(metrics)), figsize=(3.0 * max(1, len(metrics)), 3.4), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        values = [aggregates[m].get(metric, np.nan) for m in methods]
        ax.bar(range(len(methods)), values, color=_BAR_COLORS[0])
        ax.set_xticks(range(len(methods)))
        ax.set_xticklabels(methods, rotation=30, ha="right")
        ax.set_title(metric)
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return p


def plot_elo_ratings(
    mean_ratings: Mapping[str, float],
    std_ratings: Mapping[str, float],
    path: str | Path,
) -> Path:
    """Tournament ratings as bars with shuffle-spread error bars."""
    if not mean_ratings:
        raise InputError("no ratings to plot")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    methods = sorted(mean_ratings)
    means = [mean_ratings[m] for m in methods]
    stds = [std_ratings.get(m, 0.0) for m in methods]
    fig, ax = plt.subplots(figsize=(max(3.5, 1.2 * len(methods)), 3.4))
    ax.bar(range(len(methods)), means, yerr=stds, capsize=4, color=_BAR_COLORS[0])
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=30, ha="right")
    ax.set_ylabel("Elo rating")
    ax.axhline(1000.0, color="0.6", linewidth=0.8, linestyle="--")
    ax.set_title("Tournament ratings (mean over match-order shuffles)")
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return p
