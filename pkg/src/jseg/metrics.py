"""Binary classification measures, Pearson correlation, and panoptic metrics.

Measures with a zero denominator report 0 and flag the measure name in the
report instead of raising, which keeps batch evaluation total and explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import InstanceLabelMap

__all__ = [
    "ConfusionCounts",
    "MetricReport",
    "InstanceMatching",
    "binary_measures",
    "pearson",
    "match_instances",
    "panoptic",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    """Named scalar measures plus provenance metadata.

    ``flagged`` lists measures whose denominator was zero and whose value
    was therefore reported as 0.
    """

    values: dict[str, float]
    flagged: frozenset[str] = frozenset()
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class InstanceMatching:
    """Unique IoU>0.5 matching between two instance maps.

    Each label appears in at most one match; IoU above one half makes the
    matching unique, no assignment problem needs solving.
    """

    matches: tuple[tuple[int, int, float], ...]
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]


def _rate(num: float, den: float, name: str, flags: set[str]) -> float:
    if den == 0:
        flags.add(name)
        return 0.0
    return num / den


def binary_measures(
    counts: ConfusionCounts, tversky_alpha: float = 0.5, tversky_beta: float = 0.5
) -> MetricReport:
    """Youden's J, MCC, Jaccard, F1, Tversky and Accuracy from one confusion matrix.

    J is sensitivity plus specificity minus one, so it sits at zero for any
    classifier independent of the truth, at every imbalance ratio.
    """
    if counts.total == 0:
        raise ValueError("cannot compute rates from an empty confusion matrix")
    tp, fp, fn, tn = float(counts.tp), float(counts.fp), float(counts.fn), float(counts.tn)
    flags: set[str] = set()

    tpr = _rate(tp, tp + fn, "j", flags)
    tnr = _rate(tn, tn + fp, "j", flags)
    j = 0.0 if "j" in flags else tpr + tnr - 1.0

    mcc_den = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = _rate(tp * tn - fp * fn, mcc_den, "mcc", flags)

    jaccard = _rate(tp, tp + fp + fn, "jaccard", flags)
    f1 = _rate(2 * tp, 2 * tp + fp + fn, "f1", flags)
    tversky = _rate(tp, tp + tversky_alpha * fn + tversky_beta * fp, "tversky", flags)
    accuracy = (tp + tn) / counts.total

    return MetricReport(
        values={
            "j": j,
            "mcc": mcc,
            "jaccard": jaccard,
            "f1": f1,
            "tversky": tversky,
            "accuracy": accuracy,
        },
        flagged=frozenset(flags),
        meta={"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn},
    )


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient of two equal-length sequences."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length 1-D sequences of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float((dx**2).sum())
    sy = float((dy**2).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("Pearson correlation is undefined for zero variance")
    return float((dx * dy).sum() / np.sqrt(sx * sy))


def match_instances(gt: InstanceLabelMap, pred: InstanceLabelMap) -> InstanceMatching:
    """All instance pairs with IoU strictly above one half.

    Background (label 0) is not an instance.  Strict ``> 0.5`` inherits the
    uniqueness guarantee: no label can clear one half with two partners.
    """
    if gt.labels.shape != pred.labels.shape:
        raise ValueError(
            f"shape mismatch: gt {gt.labels.shape} vs prediction {pred.labels.shape}"
        )
    g = gt.labels.ravel().astype(np.int64)
    p = pred.labels.ravel().astype(np.int64)

    areas_g = np.bincount(g, minlength=1)
    areas_p = np.bincount(p, minlength=1)
    gt_labels = np.flatnonzero(areas_g)
    gt_labels = gt_labels[gt_labels > 0]
    pred_labels = np.flatnonzero(areas_p)
    pred_labels = pred_labels[pred_labels > 0]

    both = (g > 0) & (p > 0)
    key = g[both] * (int(p.max(initial=0)) + 1) + p[both]
    pair_keys, inter = np.unique(key, return_counts=True)

    matches = []
    matched_g: set[int] = set()
    matched_p: set[int] = set()
    stride = int(p.max(initial=0)) + 1
    for pair_key, overlap in zip(pair_keys, inter):
        lg = int(pair_key // stride)
        lp = int(pair_key % stride)
        union = int(areas_g[lg]) + int(areas_p[lp]) - int(overlap)
        iou = overlap / union
        if iou > 0.5:
            matches.append((lg, lp, float(iou)))
            matched_g.add(lg)
            matched_p.add(lp)

    matches.sort()
    return InstanceMatching(
        matches=tuple(matches),
        unmatched_gt=tuple(int(l) for l in gt_labels if int(l) not in matched_g),
        unmatched_pred=tuple(int(l) for l in pred_labels if int(l) not in matched_p),
    )


def panoptic(gt: InstanceLabelMap, pred: InstanceLabelMap) -> MetricReport:
    """Detection precision (P05), recognition (RQ), segmentation (SQ) and
    panoptic quality (PQ) of a predicted instance map.

    PQ equals the summed IoU of matches over ``TP + FP/2 + FN/2`` and
    factors exactly into SQ times RQ whenever matches exist.
    """
    matching = match_instances(gt, pred)
    tp = len(matching.matches)
    fp = len(matching.unmatched_pred)
    fn = len(matching.unmatched_gt)
    iou_sum = sum(iou for _, _, iou in matching.matches)
    flags: set[str] = set()

    p05 = _rate(tp, tp + fp, "p05", flags)
    rq = _rate(2 * tp, 2 * tp + fp + fn, "rq", flags)
    sq = _rate(iou_sum, tp, "sq", flags)
    pq = _rate(iou_sum, tp + fp / 2 + fn / 2, "pq", flags)

    return MetricReport(
        values={"p05": p05, "rq": rq, "sq": sq, "pq": pq},
        flagged=frozenset(flags),
        meta={"tp": tp, "fp": fp, "fn": fn, "matches": matching},
    )
