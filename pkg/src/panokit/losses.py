"""Classification/segmentation losses, deep-supervision aggregation, and the
dynamic thing/stuff weighting.

Forward values only (plus a test-oriented analytic dice gradient); training
loops and autodiff are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .types import PanopticMap, CategorySpec, ValidationError, thing_ids

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Term weights and the number of supervised decoder layers."""

    lambda_cls: float = 2.0
    lambda_seg: float = 1.0
    lambda_det: float = 1.0
    layers: int = 6

    def __post_init__(self) -> None:
        if min(self.lambda_cls, self.lambda_seg, self.lambda_det) < 0:
            raise ValidationError("loss weights must be nonnegative")
        if self.layers < 1:
            raise ValidationError(f"layers must be >= 1, got {self.layers}")


def focal_loss(
    pred: np.ndarray,
    target: Optional[int],
    gamma: float = 2.0,
    alpha_bal: float = 0.25,
) -> float:
    """Sigmoid-style focal loss summed over classes.

    pred is a vector of per-class probabilities in [0, 1]; target is the
    index of the positive class, or None when every class is negative.
    Logs are clamped at 1e-12.
    """
    p = np.asarray(pred, np.float64)
    if p.ndim != 1:
        raise ValidationError(f"pred must be a vector, got shape {p.shape}")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValidationError("pred entries must lie in [0, 1]")
    if target is not None and not 0 <= target < p.size:
        raise ValidationError(
            f"target index {target} outside [0, {p.size})"
        )
    log_p = np.log(np.maximum(p, _LOG_FLOOR))
    log_not_p = np.log(np.maximum(1.0 - p, _LOG_FLOOR))
    neg = -(1.0 - alpha_bal) * p**gamma * log_not_p
    total = float(neg.sum())
    if target is not None:
        pt = p[target]
        total -= float(neg[target])
        total += float(-alpha_bal * (1.0 - pt) ** gamma * np.log(max(pt, _LOG_FLOOR)))
    return total


def dice_loss(pred: np.ndarray, gt: np.ndarray, eps: float = 1.0) -> float:
    """1 - (2*sum(pred*gt) + eps) / (sum(pred) + sum(gt) + eps)."""
    p = np.asarray(pred, np.float64)
    g = np.asarray(gt, np.float64)
    if p.shape != g.shape:
        raise ValidationError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    num = 2.0 * float((p * g).sum()) + eps
    den = float(p.sum()) + float(g.sum()) + eps
    return 1.0 - num / den


def dice_loss_grad(pred: np.ndarray, gt: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """Analytic d dice_loss / d pred, elementwise; provided for test use."""
    p = np.asarray(pred, np.float64)
    g = np.asarray(gt, np.float64)
    if p.shape != g.shape:
        raise ValidationError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    num = 2.0 * float((p * g).sum()) + eps
    den = float(p.sum()) + float(g.sum()) + eps
    return (num - 2.0 * g * den) / den**2


def deep_supervised_loss(
    per_layer: Sequence[tuple[float, float]],
    det_loss: Optional[float] = None,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted sum over decoder layers of (cls, seg) losses, plus one
    detection term for the thing variant; det_loss=None is the stuff
    variant, which has no detection term."""
    if len(per_layer) != weights.layers:
        raise ValidationError(
            f"expected {weights.layers} layer pairs, got {len(per_layer)}"
        )
    total = 0.0 if det_loss is None else weights.lambda_det * det_loss
    for cls_loss, seg_loss in per_layer:
        total += weights.lambda_cls * cls_loss + weights.lambda_seg * seg_loss
    return total


def dynamic_lambda(thing_amount: float, stuff_amount: float) -> tuple[float, float]:
    """Proportional (lambda_things, lambda_stuff); the pair sums to 1."""
    if thing_amount < 0 or stuff_amount < 0:
        raise ValidationError("amounts must be nonnegative")
    total = thing_amount + stuff_amount
    if total == 0:
        raise ValidationError("cannot weight an image with no thing or stuff content")
    return thing_amount / total, stuff_amount / total


def lambda_counts(
    gt: PanopticMap, taxonomy: Sequence[CategorySpec], base: str = "pixels"
) -> tuple[int, int]:
    """Thing/stuff amounts used by dynamic_lambda.

    base="pixels" counts ground-truth pixels per super-category (the
    default); base="segments" counts segments instead.
    """
    things = thing_ids(taxonomy)
    if base == "segments":
        n_th = sum(1 for s in gt.segments if s.category_id in things)
        return n_th, len(gt.segments) - n_th
    if base != "pixels":
        raise ValidationError(f"unknown proportion base {base!r}")
    thing_px = 0
    stuff_px = 0
    cats, counts = np.unique(gt.sem, return_counts=True)
    for cat, count in zip(cats.tolist(), counts.tolist()):
        if cat == 0:
            continue
        if cat in things:
            thing_px += count
        else:
            stuff_px += count
    return thing_px, stuff_px


def masked_seg_weight(assignment) -> np.ndarray:
    """Per-query segmentation-loss weights: 1 if matched, 0 if unmatched."""
    indices = [q for q, _ in assignment.pairs] + list(assignment.unmatched_queries)
    if not indices:
        return np.zeros(0, np.float64)
    weights = np.zeros(max(indices) + 1, np.float64)
    for q, _ in assignment.pairs:
        weights[q] = 1.0
    return weights
