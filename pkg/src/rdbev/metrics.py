"""Evaluation protocol: pooled AP (AUPRC), global F1 threshold, occupied-class
IoU, unknown-region hallucination rate, band-wise breakdown, and the masked
focal training loss.

Pooling convention: metrics are computed over cells pooled across all
evaluated frames, not averaged per frame.  Exact pooling is the reference;
no histogram approximation is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BevGridSpec, RdbevError


class UndefinedMetricError(RdbevError):
    """Metric is undefined (no positive cells in the evaluated pool)."""


@dataclass(frozen=True)
class FocalLossParams:
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass(frozen=True)
class BandMetrics:
    ap: float | None  # None when the band has no positives
    iou: float
    pos_frac: float
    n_cells: int
    n_pos: int


@dataclass(frozen=True)
class EvalReport:
    ap: float
    iou: float
    uhr: float
    threshold: float
    pos_frac: float
    n_cells: int
    n_pos: int
    bands: dict[str, BandMetrics] = field(default_factory=dict)
    pr_curves: dict[str, np.ndarray] = field(default_factory=dict)  # (K, 3) thr, prec, rec

    def summary_items(self) -> list[tuple[str, str]]:
        items = [
            ("pooling", "cells-pooled-across-frames"),
            ("ap", f"{self.ap:.12g}"),
            ("iou", f"{self.iou:.12g}"),
            ("uhr", f"{self.uhr:.12g}"),
            ("threshold", f"{self.threshold:.12g}"),
            ("pos_frac", f"{self.pos_frac:.12g}"),
            ("n_cells", str(self.n_cells)),
            ("n_pos", str(self.n_pos)),
        ]
        for name, b in self.bands.items():
            items.append((f"band.{name}.ap", "absent" if b.ap is None else f"{b.ap:.12g}"))
            items.append((f"band.{name}.iou", f"{b.iou:.12g}"))
            items.append((f"band.{name}.pos_frac", f"{b.pos_frac:.12g}"))
            items.append((f"band.{name}.n_cells", str(b.n_cells)))
            items.append((f"band.{name}.n_pos", str(b.n_pos)))
        return items


def _pool(scores, labels, mask) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        s, y = s[m], y[m]
    else:
        s, y = s.ravel(), y.ravel()
    return s, y


def _grouped_counts(s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique thresholds descending plus cumulative TP / predicted-positive
    counts after each tie group."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last_of_group = np.ones(s_sorted.size, dtype=bool)
    last_of_group[:-1] = s_sorted[:-1] != s_sorted[1:]
    ends = np.nonzero(last_of_group)[0]
    tp = np.cumsum(y_sorted)[ends].astype(np.float64)
    pp = (ends + 1).astype(np.float64)
    return s_sorted[ends], tp, pp


def pr_curve(scores, labels, mask=None) -> np.ndarray:
    """(K, 3) array of (threshold, precision, recall) at each distinct score,
    descending; prediction rule is score >= threshold."""
    s, y = _pool(scores, labels, mask)
    if s.size == 0:
        raise UndefinedMetricError("empty evaluation pool")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("undefined AP: no positive cells in pool")
    thr, tp, pp = _grouped_counts(s, y)
    return np.column_stack([thr, tp / pp, tp / n_pos])


def average_precision(scores, labels, mask=None) -> float:
    """Area under the PR curve by step integration over ranked pooled cells;
    tie groups enter together."""
    curve = pr_curve(scores, labels, mask)
    prec, rec = curve[:, 1], curve[:, 2]
    return float(np.sum(np.diff(rec, prepend=0.0) * prec))


def select_global_threshold(scores, labels, mask=None) -> float:
    """Score value maximizing F1 over the pooled cells (rule: score >= tau);
    ties break toward the larger threshold."""
    s, y = _pool(scores, labels, mask)
    if s.size == 0:
        raise UndefinedMetricError("empty evaluation pool")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("undefined threshold: no positive cells in pool")
    thr, tp, pp = _grouped_counts(s, y)
    f1 = 2.0 * tp / (pp + n_pos)
    return float(thr[int(np.argmax(f1))])  # first max = largest threshold


def iou_occupied(pred_binary, labels, mask=None) -> float:
    """|pred AND gt| / |pred OR gt| within the mask; an empty union counts as
    a perfect 1.0 (nothing to find, nothing claimed)."""
    p = np.asarray(pred_binary, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        p, y = p & m, y & m
    union = int((p | y).sum())
    if union == 0:
        return 1.0
    return float((p & y).sum() / union)


def uhr(pred_binary, unknown_mask, hfov_mask_bits) -> float:
    """Fraction of predicted-occupied cells falling in the LiDAR-unobservable
    region of the HFOV; zero predictions inside the HFOV give 0."""
    p = np.asarray(pred_binary, dtype=bool)
    in_hfov = int((p & np.asarray(hfov_mask_bits, dtype=bool)).sum())
    if in_hfov == 0:
        return 0.0
    in_unknown = int((p & np.asarray(unknown_mask, dtype=bool)).sum())
    return in_unknown / in_hfov


def masked_focal_loss(logits, labels, mask, params: FocalLossParams = FocalLossParams()) -> float:
    """Mean focal loss over masked cells only; unmasked cells contribute
    exactly nothing (they are never touched)."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise UndefinedMetricError("focal loss over an empty mask")
    z = np.asarray(logits, dtype=np.float64)[m]
    y = np.asarray(labels, dtype=bool)[m]
    log_p = -np.logaddexp(0.0, -z)  # log sigmoid(z)
    log_1mp = -np.logaddexp(0.0, z)
    log_pt = np.where(y, log_p, log_1mp)
    pt = np.exp(log_pt)
    alpha_t = np.where(y, params.alpha, 1.0 - params.alpha)
    loss = -alpha_t * (1.0 - pt) ** params.gamma * log_pt
    return float(loss.mean())


RANGE_BANDS: tuple[tuple[str, float, float], ...] = (
    ("range_00_20", 0.0, 20.0),
    ("range_20_40", 20.0, 40.0),
    ("range_40_60", 40.0, 60.0),
)
AZIMUTH_BANDS: tuple[tuple[str, float, float], ...] = (
    ("az_00_15", 0.0, 15.0),
    ("az_15_32", 15.0, 32.0),
)


def band_masks(
    grid: BevGridSpec, radar_offset: tuple[float, float] = (0.0, 0.0)
) -> dict[str, np.ndarray]:
    """(H, W) membership masks for the range and |azimuth| bands, computed
    from cell centers relative to the radar origin.  Upper bounds are
    half-open except for the last band of each family."""
    cx, cy = grid.center_grids()
    dx, dy = cx - radar_offset[0], cy - radar_offset[1]
    rng = np.hypot(dx, dy)
    az = np.abs(np.degrees(np.arctan2(dy, dx)))
    out: dict[str, np.ndarray] = {}
    for idx, (name, lo, hi) in enumerate(RANGE_BANDS):
        last = idx == len(RANGE_BANDS) - 1
        out[name] = (rng >= lo) & ((rng <= hi) if last else (rng < hi))
    for idx, (name, lo, hi) in enumerate(AZIMUTH_BANDS):
        last = idx == len(AZIMUTH_BANDS) - 1
        out[name] = (az >= lo) & ((az <= hi) if last else (az < hi))
    return out


def _downsample_curve(curve: np.ndarray, max_samples: int = 512) -> np.ndarray:
    if curve.shape[0] <= max_samples:
        return curve
    idx = np.unique(np.linspace(0, curve.shape[0] - 1, max_samples).round().astype(int))
    return curve[idx]


def bandwise_report(
    scores: np.ndarray,
    labels: np.ndarray,
    sup: np.ndarray,
    unknown: np.ndarray,
    hfov: np.ndarray,
    grid: BevGridSpec,
    radar_offset: tuple[float, float] = (0.0, 0.0),
    max_curve_samples: int = 512,
) -> EvalReport:
    """Full protocol over stacked (N, H, W) arrays: pooled AP, the global
    F1-max threshold, IoU at that threshold, UHR, and per-band metrics at the
    same single threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    sup = np.asarray(sup, dtype=bool)
    unknown = np.asarray(unknown, dtype=bool)
    hfov = np.asarray(hfov, dtype=bool)
    if scores.ndim == 2:
        scores, labels, sup, unknown, hfov = (
            a[None] for a in (scores, labels, sup, unknown, hfov)
        )
    if scores.shape[1:] != grid.shape:
        raise ValueError(f"scores shape {scores.shape} does not match grid {grid.shape}")

    ap = average_precision(scores, labels, sup)
    tau = select_global_threshold(scores, labels, sup)
    pred = scores >= tau
    iou = iou_occupied(pred, labels, sup)
    hall = uhr(pred, unknown, hfov)
    n_cells = int(sup.sum())
    n_pos = int((labels & sup).sum())

    bands: dict[str, BandMetrics] = {}
    curves: dict[str, np.ndarray] = {
        "overall": _downsample_curve(pr_curve(scores, labels, sup), max_curve_samples)
    }
    for name, band in band_masks(grid, radar_offset).items():
        bmask = sup & band[None, :, :]
        bn = int(bmask.sum())
        bp = int((labels & bmask).sum())
        if bp > 0:
            band_ap = average_precision(scores, labels, bmask)
            curves[name] = _downsample_curve(pr_curve(scores, labels, bmask), max_curve_samples)
        else:
            band_ap = None
        band_iou = iou_occupied(pred, labels, bmask)
        bands[name] = BandMetrics(
            ap=band_ap,
            iou=band_iou,
            pos_frac=bp / bn if bn else 0.0,
            n_cells=bn,
            n_pos=bp,
        )

    return EvalReport(
        ap=ap,
        iou=iou,
        uhr=hall,
        threshold=tau,
        pos_frac=n_pos / n_cells if n_cells else 0.0,
        n_cells=n_cells,
        n_pos=n_pos,
        bands=bands,
        pr_curves=curves,
    )
