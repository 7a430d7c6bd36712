"""Independent brute-force oracles for the metric implementations.

These enumerate thresholds explicitly with plain Python loops and stay
deliberately separate from the library code paths they check.
"""

from __future__ import annotations

import numpy as np


def brute_pr_points(scores, labels):
    """(threshold, precision, recall) at every distinct score, descending,
    computed by explicit counting with rule score >= threshold."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(y.sum())
    points = []
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        tp = int((pred & y).sum())
        pp = int(pred.sum())
        points.append((thr, tp / pp, tp / n_pos))
    return points


def brute_average_precision(scores, labels):
    points = brute_pr_points(scores, labels)
    ap = 0.0
    prev_recall = 0.0
    for _, precision, recall in points:
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def brute_select_threshold(scores, labels):
    """Score value maximizing F1; ties toward the larger threshold."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(y.sum())
    best_tau, best_f1 = None, -1.0
    for thr in sorted(set(s.tolist()), reverse=True):
        pred = s >= thr
        tp = int((pred & y).sum())
        pp = int(pred.sum())
        f1 = 2.0 * tp / (pp + n_pos) if (pp + n_pos) else 0.0
        if f1 > best_f1:
            best_tau, best_f1 = thr, f1
    return best_tau


def brute_iou(pred, labels):
    p = np.asarray(pred, dtype=bool).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    inter = sum(1 for a, b in zip(p, y) if a and b)
    union = sum(1 for a, b in zip(p, y) if a or b)
    return 1.0 if union == 0 else inter / union


def brute_uhr(pred, unknown, hfov):
    p = np.asarray(pred, dtype=bool).ravel()
    u = np.asarray(unknown, dtype=bool).ravel()
    h = np.asarray(hfov, dtype=bool).ravel()
    in_hfov = sum(1 for a, b in zip(p, h) if a and b)
    if in_hfov == 0:
        return 0.0
    in_unknown = sum(1 for a, b in zip(p, u) if a and b)
    return in_unknown / in_hfov
