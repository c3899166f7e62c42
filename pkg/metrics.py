"""
AUC, F1, ECE and the composite score S = AUC + 0.5*F1 + 0.5*(1 - ECE).

ECE bins the confidence of the predicted class, max(p, 1 - p), into equal-width
bins over [0.5, 1] (left-open, right-closed, lowest bin closed) and weights each
bin's |accuracy - confidence| gap by its share of samples.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from pydantic import BaseModel, model_validator
from scipy.stats import rankdata

from predictions import PredictionSet
from settings import DECISION_THRESHOLD, ECE_BINS

logger = logging.getLogger(__name__)

SCORE_TOLERANCE = 1e-12


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class BinStats:
    index: int
    count: int
    confidence: float
    accuracy: float

    def as_dict(self) -> dict:
        return asdict(self)


class MetricsReport(BaseModel):
    model_name: str = ""
    auc: float
    f1: float
    ece: float
    overall: float

    @model_validator(mode="after")
    def _check(self):
        for field in ("auc", "f1", "ece"):
            value = getattr(self, field)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{field} must be within [0, 1], got {value}")
        expected = overall_score(self.auc, self.f1, self.ece)
        if abs(expected - self.overall) > SCORE_TOLERANCE:
            raise ValueError(f"overall {self.overall} disagrees with the score formula ({expected})")
        return self

    @classmethod
    def from_components(cls, model_name: str, auc: float, f1: float, ece: float) -> "MetricsReport":
        return cls(model_name=model_name, auc=auc, f1=f1, ece=ece, overall=overall_score(auc, f1, ece))

    def summary(self) -> str:
        return f"auc={self.auc:.4f} f1={self.f1:.4f} ece={self.ece:.4f} S={self.overall:.4f}"


def _as_arrays(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape:
        raise ValueError(f"probs and labels differ in length ({p.size} vs {y.size})")
    return p, y


def compute_auc(probs, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    p, y = _as_arrays(probs, labels)
    positive = y == 1
    n_pos = int(positive.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined: need both classes, got {n_pos} positive and {n_neg} negative"
        )
    ranks = rankdata(p, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_confusion(probs, labels, threshold: float = DECISION_THRESHOLD) -> ConfusionCounts:
    p, y = _as_arrays(probs, labels)
    return confusion_from_classes(p >= threshold, y)


def confusion_from_classes(predicted, labels) -> ConfusionCounts:
    """Counts for hard class decisions made elsewhere, e.g. a majority vote."""
    predicted = np.asarray(predicted).astype(bool)
    actual = np.asarray(labels) == 1
    if predicted.shape != actual.shape:
        raise ValueError(f"predicted and labels differ in shape: {predicted.shape} vs {actual.shape}")
    return ConfusionCounts(
        tp=int((predicted & actual).sum()),
        fp=int((predicted & ~actual).sum()),
        fn=int((~predicted & actual).sum()),
        tn=int((~predicted & ~actual).sum()),
    )


def compute_f1(counts: ConfusionCounts) -> float:
    denominator = 2 * counts.tp + counts.fp + counts.fn
    if denominator == 0:
        return 0.0
    return 2 * counts.tp / denominator


def _bin_index(confidence: np.ndarray, n_bins: int) -> np.ndarray:
    edges = np.linspace(0.5, 1.0, n_bins + 1)
    # side="left" puts values sitting on an inner edge into the lower bin
    return np.searchsorted(edges[1:-1], confidence, side="left")


def _calibration_sums(probs, labels, n_bins: int):
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    p, y = _as_arrays(probs, labels)
    if p.size == 0:
        raise ValueError("ECE needs at least one prediction")
    confidence = np.maximum(p, 1.0 - p)
    correct = ((p >= 0.5).astype(np.int8) == y).astype(np.float64)
    index = _bin_index(confidence, n_bins)
    counts = np.bincount(index, minlength=n_bins)
    conf_sums = np.bincount(index, weights=confidence, minlength=n_bins)
    hit_sums = np.bincount(index, weights=correct, minlength=n_bins)
    return p.size, counts, conf_sums, hit_sums


def calibration_bins(probs, labels, n_bins: int = ECE_BINS) -> list[BinStats]:
    _, counts, conf_sums, hit_sums = _calibration_sums(probs, labels, n_bins)
    bins = []
    for b in range(n_bins):
        n = int(counts[b])
        bins.append(
            BinStats(
                index=b,
                count=n,
                confidence=float(conf_sums[b] / n) if n else 0.0,
                accuracy=float(hit_sums[b] / n) if n else 0.0,
            )
        )
    return bins


def compute_ece(probs, labels, n_bins: int = ECE_BINS) -> float:
    total, _, conf_sums, hit_sums = _calibration_sums(probs, labels, n_bins)
    # sum_b (n_b/N)|acc_b - conf_b| == sum_b |hits_b - conf_b| / N
    ece = float(np.abs(hit_sums - conf_sums).sum() / total)
    return min(ece, 1.0)


def overall_score(auc: float, f1: float, ece: float) -> float:
    return auc + 0.5 * f1 + 0.5 * (1.0 - ece)


def evaluate_arrays(
    probs,
    labels,
    model_name: str = "",
    n_bins: int = ECE_BINS,
    threshold: float = DECISION_THRESHOLD,
    predicted=None,
) -> MetricsReport:
    auc = compute_auc(probs, labels)
    if predicted is None:
        counts = compute_confusion(probs, labels, threshold)
    else:
        counts = confusion_from_classes(predicted, labels)
    f1 = compute_f1(counts)
    ece = compute_ece(probs, labels, n_bins)
    return MetricsReport.from_components(model_name, auc, f1, ece)


def evaluate(
    pset: PredictionSet,
    n_bins: int = ECE_BINS,
    threshold: float = DECISION_THRESHOLD,
    predicted=None,
) -> MetricsReport:
    """F1 counts `predicted` when given, otherwise probs thresholded at `threshold`."""
    report = evaluate_arrays(pset.probs, pset.labels, pset.model_name, n_bins, threshold, predicted)
    logger.debug(f"{pset.model_name}: {report.summary()}")
    return report
