"""Evaluation measures for binary and multiclass predictions.

Confusion counts use the enhancer-literature notation: ``s_plus`` and
``s_minus`` are the actual positive / negative totals, ``s_minus_of_plus``
the positives predicted negative and ``s_plus_of_minus`` the negatives
predicted positive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """A metric whose denominator is zero for the given counts."""


@dataclass(frozen=True)
class ConfusionCounts:
    s_plus: int
    s_minus: int
    s_minus_of_plus: int
    s_plus_of_minus: int

    def __post_init__(self):
        if not 0 <= self.s_minus_of_plus <= self.s_plus or not 0 <= self.s_plus_of_minus <= self.s_minus:
            raise ValueError(f"inconsistent confusion counts {self}")

    @classmethod
    def from_cells(cls, tp, fn, tn, fp):
        return cls(tp + fn, tn + fp, fn, fp)

    @property
    def cells(self):
        """``(tp, fn, tn, fp)``."""
        fn, fp = self.s_minus_of_plus, self.s_plus_of_minus
        return self.s_plus - fn, fn, self.s_minus - fp, fp


def _binary(a, what):
    a = np.asarray(a)
    if not np.isin(a, (0, 1)).all():
        raise ValueError(f"{what} must be binary (0/1)")
    return a.astype(np.int64)


def confusion(preds, labels):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    preds, labels = _binary(preds, "predictions"), _binary(labels, "labels")
    pos = labels == 1
    return ConfusionCounts(
        int(pos.sum()), int((~pos).sum()), int((pos & (preds == 0)).sum()), int((~pos & (preds == 1)).sum())
    )


def acc(c: ConfusionCounts):
    total = c.s_plus + c.s_minus
    if total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return 1.0 - (c.s_minus_of_plus + c.s_plus_of_minus) / total


def sn(c: ConfusionCounts):
    if c.s_plus == 0:
        raise UndefinedMetricError("sensitivity undefined without positive samples")
    return 1.0 - c.s_minus_of_plus / c.s_plus


def sp(c: ConfusionCounts):
    if c.s_minus == 0:
        raise UndefinedMetricError("specificity undefined without negative samples")
    return 1.0 - c.s_plus_of_minus / c.s_minus


def mcc_eq4(c: ConfusionCounts):
    """MCC in the ratio form used by the enhancer-prediction literature, as printed.

    Note this is not algebraically the standard MCC; see :func:`mcc_sweep`.
    """
    if c.s_plus == 0 or c.s_minus == 0:
        raise UndefinedMetricError("ratio-form MCC needs both classes present")
    fp, fn = c.s_plus_of_minus, c.s_minus_of_plus
    num = 1.0 - (fp + fn) / (c.s_plus + c.s_minus)
    den = (1.0 + (fp - fn) / c.s_plus) * (1.0 + (fn - fp) / c.s_minus)
    if den <= 0:
        raise UndefinedMetricError(f"ratio-form MCC denominator is {den}")
    return num / math.sqrt(den)


def mcc_standard(c: ConfusionCounts):
    tp, fn, tn, fp = c.cells
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        raise UndefinedMetricError("standard MCC denominator is zero")
    return (tp * tn - fp * fn) / math.sqrt(den)


mcc = mcc_standard


def auc(scores, labels):
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _binary(labels, "labels")
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def overall_accuracy(preds, labels, n_classes=None):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if labels.size == 0:
        raise UndefinedMetricError("accuracy of an empty prediction set")
    if preds.shape != labels.shape:
        raise ValueError("length mismatch")
    if n_classes is not None and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels outside [0, {n_classes})")
    return float((preds == labels).mean())


@dataclass
class MetricsReport:
    overall_acc: float
    n_samples: int
    acc: float | None = None
    sn: float | None = None
    sp: float | None = None
    mcc_eq4: float | None = None
    mcc_standard: float | None = None
    auc: float | None = None
    counts: dict | None = None
    undefined: dict | None = None

    def to_dict(self):
        return asdict(self)


def _try(fn, *args):
    try:
        return fn(*args), None
    except UndefinedMetricError as exc:
        return None, str(exc)


def evaluate_predictions(preds, labels, n_classes, pos_scores=None):
    """Full report: overall accuracy always, plus the binary suite when C = 2.

    Undefined binary metrics are reported as ``None`` with the reason under
    ``undefined``; they are never replaced by a number.
    """
    report = MetricsReport(overall_accuracy(preds, labels, n_classes), int(len(labels)))
    if n_classes != 2:
        return report
    c = confusion(preds, labels)
    report.counts = asdict(c)
    undefined = {}
    for name, fn in (("acc", acc), ("sn", sn), ("sp", sp), ("mcc_eq4", mcc_eq4), ("mcc_standard", mcc_standard)):
        value, why = _try(fn, c)
        setattr(report, name, value)
        if why:
            undefined[name] = why
    if pos_scores is not None:
        report.auc, why = _try(auc, pos_scores, labels)
        if why:
            undefined["auc"] = why
    report.undefined = undefined or None
    return report


def mcc_sweep(max_cell=10):
    """Compare both MCC forms over every confusion matrix with cells in [0, max_cell].

    Returns summary statistics plus the case with the largest discrepancy.
    """
    n_both = n_only_eq4 = n_only_std = n_neither = 0
    max_gap, worst = 0.0, None
    eq4_min, eq4_max = math.inf, -math.inf
    for tp, fn, tn, fp in itertools.product(range(max_cell + 1), repeat=4):
        c = ConfusionCounts.from_cells(tp, fn, tn, fp)
        a, _ = _try(mcc_eq4, c)
        b, _ = _try(mcc_standard, c)
        if a is not None:
            eq4_min, eq4_max = min(eq4_min, a), max(eq4_max, a)
        if a is not None and b is not None:
            n_both += 1
            gap = abs(a - b)
            if gap > max_gap:
                max_gap, worst = gap, {"tp": tp, "fn": fn, "tn": tn, "fp": fp, "mcc_eq4": a, "mcc_standard": b}
        elif a is not None:
            n_only_eq4 += 1
        elif b is not None:
            n_only_std += 1
        else:
            n_neither += 1
    return {
        "cases": (max_cell + 1) ** 4,
        "both_defined": n_both,
        "only_eq4_defined": n_only_eq4,
        "only_standard_defined": n_only_std,
        "neither_defined": n_neither,
        "max_abs_discrepancy": max_gap,
        "worst_case": worst,
        "eq4_range": [eq4_min, eq4_max],
    }
