import numpy as np
import pytest

from metrics import (
    ConfusionCounts,
    MetricsReport,
    UndefinedMetricError,
    calibration_bins,
    compute_auc,
    compute_confusion,
    compute_ece,
    compute_f1,
    confusion_from_classes,
    evaluate,
    overall_score,
)
from predictions import PredictionSet
from synthgen import generate_calibrated_set, generate_miscalibrated_set


def _pairwise_auc(probs, labels):
    pos = probs[labels == 1]
    neg = probs[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


class TestOverallScore:
    @pytest.mark.parametrize(
        "auc, f1, ece, printed",
        [
            (0.7233, 0.7778, 0.3346, 1.4449),
            (0.7633, 0.6275, 0.1966, 1.47875),
            (0.7617, 0.7347, 0.2057, 1.5262),
            (0.7467, 0.6780, 0.2449, 1.46325),
            (0.6517, 0.5714, 0.1023, 1.3862),
            (0.71885, 0.6862, 0.5361, 1.2939),
        ],
    )
    def test_reproduces_published_rows(self, auc, f1, ece, printed):
        assert overall_score(auc, f1, ece) == pytest.approx(printed, abs=5e-4)

    def test_extremes(self):
        assert overall_score(1.0, 1.0, 0.0) == 2.0
        assert overall_score(0.0, 0.0, 1.0) == 0.0

    def test_report_rejects_inconsistent_score(self):
        with pytest.raises(ValueError):
            MetricsReport(model_name="m", auc=0.7, f1=0.6, ece=0.2, overall=1.5)
        report = MetricsReport.from_components("m", 0.7, 0.6, 0.2)
        assert report.overall == pytest.approx(0.7 + 0.3 + 0.4)


class TestAuc:
    def test_matches_pairwise_oracle_with_ties(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, size=n)
            labels[0], labels[1] = 0, 1
            probs = rng.random(n)
            for i in range(n):
                if rng.random() < 0.2:
                    probs[i] = probs[rng.integers(0, n)]
            assert abs(compute_auc(probs, labels) - _pairwise_auc(probs, labels)) <= 1e-12

    def test_all_tied_is_one_half(self):
        assert compute_auc([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1]) == 0.5

    def test_perfect_and_reversed(self):
        assert compute_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert compute_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_single_class_is_undefined(self):
        with pytest.raises(UndefinedMetricError, match="AUC undefined"):
            compute_auc([0.2, 0.7], [1, 1])

    def test_agrees_with_sklearn(self, rng):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        labels = rng.integers(0, 2, size=300)
        probs = np.round(rng.random(300), 2)
        assert compute_auc(probs, labels) == pytest.approx(sklearn_metrics.roc_auc_score(labels, probs), abs=1e-12)


class TestF1:
    def test_threshold_is_inclusive(self):
        counts = compute_confusion([0.5, 0.49, 0.9, 0.1], [1, 1, 0, 0])
        assert counts == ConfusionCounts(tp=1, fp=1, fn=1, tn=1)
        assert compute_f1(counts) == 0.5

    def test_no_positives_anywhere_is_zero(self):
        assert compute_f1(compute_confusion([0.1, 0.2], [0, 0])) == 0.0

    def test_counts_from_hard_decisions(self):
        counts = confusion_from_classes([1, 1, 0, 0], [1, 0, 1, 0])
        assert counts == ConfusionCounts(tp=1, fp=1, fn=1, tn=1)

    def test_hard_decisions_must_match_labels(self):
        with pytest.raises(ValueError, match="differ in shape"):
            confusion_from_classes([1, 0], [1, 0, 1])


class TestEce:
    def test_perfect_predictions(self, perfect_set):
        assert compute_ece(perfect_set.probs, perfect_set.labels) == 0.0

    def test_bin_that_matches_its_accuracy(self):
        probs = np.full(10, 0.8)
        labels = np.array([1] * 8 + [0] * 2)
        assert compute_ece(probs, labels) == pytest.approx(0.0, abs=1e-12)

    def test_overconfident_bin(self):
        # confidence 0.9, accuracy 0.5
        assert compute_ece([0.9, 0.9, 0.1, 0.1], [1, 0, 1, 0]) == pytest.approx(0.4)

    def test_bins_cover_half_to_one(self):
        bins = calibration_bins([0.5, 0.0, 1.0, 0.74], [1, 0, 1, 0], n_bins=10)
        assert len(bins) == 10
        assert bins[0].count == 1
        assert bins[-1].count == 2
        assert bins[4].count == 1
        assert sum(b.count for b in bins) == 4
        assert bins[2].as_dict() == {"index": 2, "count": 0, "confidence": 0.0, "accuracy": 0.0}

    def test_calibrated_source_has_small_ece(self):
        pset = generate_calibrated_set(100_000, seed=7)
        assert compute_ece(pset.probs, pset.labels, n_bins=10) < 0.01

    def test_overconfident_source_has_large_ece(self):
        pset = generate_miscalibrated_set(100_000, seed=7, temperature=0.5)
        assert compute_ece(pset.probs, pset.labels, n_bins=10) > 0.05


def test_evaluate_perfect_set(perfect_set):
    report = evaluate(perfect_set)
    assert report.model_name == "perfect"
    assert report.summary() == "auc=1.0000 f1=1.0000 ece=0.0000 S=2.0000"


def test_evaluate_scores_given_classes_instead_of_thresholding():
    # two of three models vote for the positives: the vote share 2/3 sits below a 0.7 cutoff
    pset = PredictionSet("votes", ["a", "b", "c", "d"], [1, 1, 0, 0], [2 / 3, 2 / 3, 0.0, 0.0])
    assert evaluate(pset, threshold=0.7).f1 == 0.0
    assert evaluate(pset, threshold=0.7, predicted=[1, 1, 0, 0]).f1 == 1.0
