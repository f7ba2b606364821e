"""Benchmark metrics: fixed-threshold precision/recall, average precision,
mean absolute error, and existence accuracy.

Saliency maps are compared at the 256 integer gray levels: a pixel counts
as predicted-positive at threshold t when its level is >= t, so threshold
0 always predicts everything (recall 1) and an all-black map predicts
nothing at every other threshold.  Counts are pooled over the dataset by
default; a per-image mode averages the ratios instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInput, DimensionMismatch

LEVELS = 256


@dataclass
class PrCurve:
    """Precision and recall at every integer threshold 0..255."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def _as_levels(saliency_map):
    arr = np.asarray(saliency_map)
    if arr.ndim != 2:
        raise DimensionMismatch(f"saliency map must be 2-D, got {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating):
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("float saliency maps must lie in [0, 1]")
        return np.round(arr * 255.0).astype(np.int64)
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("integer saliency maps must lie in 0..255")
    return arr


def _as_mask(mask):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatch(f"mask must be 2-D, got {arr.shape}")
    return arr > 0


def _level_histograms(saliency_map, mask):
    levels = _as_levels(saliency_map)
    mask = _as_mask(mask)
    if levels.shape != mask.shape:
        raise DimensionMismatch(
            f"map {levels.shape} vs mask {mask.shape}")
    pos = np.bincount(levels[mask], minlength=LEVELS)
    neg = np.bincount(levels[~mask], minlength=LEVELS)
    return pos, neg


def _counts_to_pr(pos_hist, neg_hist):
    tp = np.cumsum(pos_hist[::-1])[::-1].astype(np.float64)
    fp = np.cumsum(neg_hist[::-1])[::-1].astype(np.float64)
    predicted = tp + fp
    n_pos = pos_hist.sum()
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    recall = tp / n_pos if n_pos > 0 else np.zeros(LEVELS)
    return precision, recall, n_pos


def pr_curve(maps, masks, per_image=False):
    """Precision-recall triples over thresholds 0..255.

    Pooled mode accumulates TP/FP/FN over the whole dataset.  Per-image
    mode averages each image's precision and recall instead, skipping
    images whose ground truth has no positive pixel.  Thresholds with zero
    predictions score precision 1 and recall 0.
    """
    if len(maps) != len(masks):
        raise DimensionMismatch("map/mask list lengths differ")
    thresholds = np.arange(LEVELS)
    if per_image:
        precisions, recalls = [], []
        for smap, mask in zip(maps, masks):
            pos, neg = _level_histograms(smap, mask)
            p, r, n_pos = _counts_to_pr(pos, neg)
            if n_pos == 0:
                continue
            precisions.append(p)
            recalls.append(r)
        if not precisions:
            raise DegenerateInput("no positive ground-truth pixels in dataset")
        return PrCurve(thresholds, np.mean(precisions, axis=0),
                       np.mean(recalls, axis=0))

    pos_hist = np.zeros(LEVELS, dtype=np.int64)
    neg_hist = np.zeros(LEVELS, dtype=np.int64)
    for smap, mask in zip(maps, masks):
        pos, neg = _level_histograms(smap, mask)
        pos_hist += pos
        neg_hist += neg
    if pos_hist.sum() == 0:
        raise DegenerateInput("no positive ground-truth pixels in dataset")
    precision, recall, _ = _counts_to_pr(pos_hist, neg_hist)
    return PrCurve(thresholds, precision, recall)


def average_precision(curve):
    """Area under the precision-recall curve.

    Points are sorted by recall; equal recalls collapse to their best
    precision; if the lowest recall is above zero the curve is anchored
    there with its own precision, and the area comes from the trapezoid
    rule.
    """
    by_recall = {}
    for p, r in zip(curve.precision, curve.recall):
        r = float(r)
        by_recall[r] = max(by_recall.get(r, 0.0), float(p))
    recalls = sorted(by_recall)
    precisions = [by_recall[r] for r in recalls]
    if recalls[0] > 0.0:
        recalls.insert(0, 0.0)
        precisions.insert(0, precisions[0])
    return float(np.trapezoid(precisions, recalls))


def mae(maps, masks):
    """Mean absolute map/mask difference, averaged per image then overall."""
    if len(maps) != len(masks):
        raise DimensionMismatch("map/mask list lengths differ")
    if len(maps) == 0:
        raise ValueError("empty evaluation set")
    per_image = []
    for smap, mask in zip(maps, masks):
        levels = _as_levels(smap)
        mask = _as_mask(mask)
        if levels.shape != mask.shape:
            raise DimensionMismatch(f"map {levels.shape} vs mask {mask.shape}")
        per_image.append(np.mean(np.abs(levels / 255.0 - mask)))
    return float(np.mean(per_image))


def accuracy(predicted, truth):
    """Fraction of exactly matching labels."""
    predicted = np.asarray(predicted).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if len(predicted) != len(truth):
        raise DimensionMismatch("label vectors differ in length")
    if len(truth) == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(predicted == truth))
