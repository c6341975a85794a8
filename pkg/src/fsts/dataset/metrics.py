"""Pixel-level localisation metrics.

F1 of two empty masks is 1.0: an authentic image predicted as authentic is
a perfect answer. AUC is the Mann-Whitney statistic with tied scores counted
as half a correct ordering; a ground truth with a single class has no AUC
and raises.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def confusion(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    p, g = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    _check(p, g)
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    tn = int((~p & ~g).sum())
    return tp, fp, fn, tn


def pixel_f1(pred: np.ndarray, gt: np.ndarray) -> float:
    tp, fp, fn, _ = confusion(pred, gt)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def pixel_auc(scores: np.ndarray, gt: np.ndarray) -> float:
    s = np.asarray(scores, dtype=float)
    g = np.asarray(gt, dtype=bool)
    _check(s, g)
    s, g = s.ravel(), g.ravel()
    n_pos = int(g.sum())
    n_neg = g.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: ground truth has a single class")
    ranks = rankdata(s, method="average")
    u = ranks[g].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
