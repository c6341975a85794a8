"""Report figures, rendered off-screen to files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import GroupRow, UsageRow  # noqa: E402


def plot_top_operations(rows: Sequence[UsageRow], path: str | Path, title: str) -> Path:
    """Horizontal bars of usage share, most used on top."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 0.45 * max(len(rows), 1) + 1.2))
    labels = [r.label for r in rows][::-1]
    shares = [100 * r.share for r in rows][::-1]
    bars = ax.barh(labels, shares, color="#4c72b0")
    for b, s in zip(bars, shares):
        ax.text(b.get_width() + 0.5, b.get_y() + b.get_height() / 2, f"{s:.1f}%", va="center", fontsize=8)
    ax.set_xlabel("usage (%)")
    ax.set_xlim(0, max(shares + [1.0]) * 1.15)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_group_fidelity(groups: Sequence[GroupRow], path: str | Path, title: str) -> Path:
    """Empirical against configured share for every variant row."""
    path = Path(path)
    conf, emp, err = [], [], []
    for g in groups:
        for r in g.rows:
            conf.append(100 * r.configured)
            emp.append(100 * r.share)
            err.append([100 * (r.share - r.ci_low), 100 * (r.ci_high - r.share)])
    fig, ax = plt.subplots(figsize=(5, 5))
    if conf:
        lo, hi = zip(*err)
        ax.errorbar(conf, emp, yerr=[lo, hi], fmt="o", ms=3, color="#dd8452", ecolor="#999999")
    ax.plot([0, 100], [0, 100], lw=0.8, color="#333333")
    ax.set_xlabel("configured (%)")
    ax.set_ylabel("observed (%)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
