"""Evaluation metrics: RMSE, ROC curve / AUC, paired sign test.

AUC is computed from integer trapezoid areas so it equals the
Mann-Whitney pair statistic (ties counted 1/2) exactly, not just to
rounding.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from studysim.errors import EmptyInput, LengthMismatch, SingleClass


def rmse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptyInput("rmse of empty sequences")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def roc_auc(scores: Sequence[float], labels: Sequence[int]
            ) -> tuple[list[tuple[float, float]], float]:
    """ROC curve from a threshold sweep over distinct scores, plus exact AUC.

    The curve runs from (0, 0) to (1, 1); the area is accumulated as an
    integer trapezoid numerator, making it identical to pair counting.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} vs {y.shape}")
    pos_total = int(np.sum(y == 1))
    neg_total = int(np.sum(y == 0))
    if pos_total == 0 or neg_total == 0:
        raise SingleClass("ROC needs both classes present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    curve = [(0.0, 0.0)]
    area2 = 0  # twice the area, integer
    tp = fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        d_tp = int(np.sum(y_sorted[i:j] == 1))
        d_fp = (j - i) - d_tp
        area2 += d_fp * (2 * tp + d_tp)
        tp += d_tp
        fp += d_fp
        curve.append((fp / neg_total, tp / pos_total))
        i = j
    auc = area2 / (2 * pos_total * neg_total)
    return curve, auc


def sign_test_pvalue(differences: Sequence[float]) -> float:
    """One-sided exact sign test: P(wins >= observed | no effect), ties dropped."""
    wins = sum(1 for d in differences if d > 0)
    losses = sum(1 for d in differences if d < 0)
    m = wins + losses
    if m == 0:
        return 1.0
    tail = sum(math.comb(m, k) for k in range(wins, m + 1))
    return tail / 2 ** m
