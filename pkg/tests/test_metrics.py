"""Metric oracles, the McNemar contingency values, Bonferroni, bins."""

import numpy as np
import pytest

from labelnet.metrics import (
    CLASS_SIZE_EDGES,
    WORD_COUNT_EDGES,
    ContingencyTable,
    MetricsError,
    argmax_predictions,
    binarize,
    bonferroni,
    confusion_pairs,
    ece,
    evaluate,
    format_p,
    hamming_loss,
    macro_f1,
    mcnemar,
    micro_accuracy_block,
    per_label_f1,
    stratified_bins,
)

# Published contingency pairs with their continuity-corrected statistics
MCNEMAR_ORACLE = [
    (42, 216, 116.0, None),      # p < 0.001
    (54, 193, 77.1, None),       # p < 0.001
    (120, 116, 0.04, 0.845),
    (100, 115, 0.91, 0.340),
    (130, 112, 1.19, 0.274),
    (123, 125, 0.00, 0.949),
]


class TestBinarize:
    def test_boundary_is_inclusive(self):
        out = binarize(np.array([[0.5]]), np.array([0.5]))
        assert out[0, 0]

    def test_all_zero_probabilities(self):
        out = binarize(np.zeros((3, 2)), np.array([0.5, 0.5]))
        assert not out.any()

    def test_hand_fixture(self):
        probs = np.array([[0.6, 0.4], [0.5, 0.2]])
        out = binarize(probs, np.array([0.5, 0.5]))
        np.testing.assert_array_equal(out, [[True, False], [True, False]])


class TestMacroF1:
    def test_perfect_decisions(self):
        labels = np.array([0, 1, 2])
        decisions = np.eye(3, dtype=bool)
        assert macro_f1(decisions, labels, 3) == 1.0

    def test_all_negative_decisions(self):
        labels = np.array([0, 1])
        assert macro_f1(np.zeros((2, 2), dtype=bool), labels, 2) == 0.0

    def test_three_label_hand_fixture(self):
        # label 0 perfect (F1=1); label 1 P=1,R=0.5 (F1=2/3); label 2 absent
        # and silent (F1=0): macro = 5/9
        labels = np.array([0, 0, 1, 1])
        decisions = np.array([
            [1, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 0],
        ], dtype=bool)
        assert macro_f1(decisions, labels, 3) == pytest.approx(5 / 9)


class TestMicroAccuracy:
    def test_equals_accuracy_for_single_label(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            probs = rng.random((12, 5))
            labels = rng.integers(0, 5, size=12)
            micro, acc = micro_accuracy_block(probs, labels)
            assert micro == pytest.approx(acc)

    def test_all_correct(self):
        probs = np.eye(4)
        labels = np.arange(4)
        assert micro_accuracy_block(probs, labels) == (1.0, 1.0)

    def test_three_of_four_correct(self):
        probs = np.eye(4)
        labels = np.array([0, 1, 2, 0])
        micro, acc = micro_accuracy_block(probs, labels)
        assert (micro, acc) == (0.75, 0.75)

    def test_argmax_tie_smallest_id(self):
        probs = np.array([[0.4, 0.4, 0.2]])
        assert argmax_predictions(probs)[0] == 0


class TestHamming:
    def test_perfect(self):
        labels = np.array([0, 1])
        assert hamming_loss(np.eye(2, dtype=bool), labels, 2) == 0.0

    def test_all_positive_k40(self):
        labels = np.zeros(5, dtype=np.int64)
        decisions = np.ones((5, 40), dtype=bool)
        assert hamming_loss(decisions, labels, 40) == pytest.approx(39 / 40)

    def test_all_negative_k40(self):
        labels = np.zeros(5, dtype=np.int64)
        decisions = np.zeros((5, 40), dtype=bool)
        assert hamming_loss(decisions, labels, 40) == pytest.approx(1 / 40)


class TestEce:
    def test_perfectly_calibrated_bin(self):
        # all pairs at confidence 0.8 with empirical positive rate 0.8
        p = np.full(10, 0.8)
        y = np.array([1.0] * 8 + [0.0] * 2)
        assert _pooled_ece(p, y, bins=10) == pytest.approx(0.0, abs=1e-12)

    def test_confident_and_wrong(self):
        probs = np.ones((5, 1))
        labels = np.ones(5, dtype=np.int64)   # label 1, but only column 0 exists
        val = _pooled_ece(probs.ravel(), np.zeros(5), bins=10)
        assert val == 1.0

    def test_two_bin_fixture(self):
        # 10 pairs at 0.9 with 8 positives, 10 at 0.1 with 3: ECE = 0.15
        p = np.array([0.9] * 10 + [0.1] * 10)
        y = np.array([1] * 8 + [0] * 2 + [1] * 3 + [0] * 7, dtype=float)
        assert _pooled_ece(p, y, bins=2) == pytest.approx(0.15)

    def test_needs_two_bins(self):
        with pytest.raises(MetricsError):
            ece(np.ones((2, 2)) * 0.5, np.array([0, 1]), bins=1)


def _pooled_ece(p, y, bins):
    """Independent scalar ECE oracle over explicit (prob, outcome) pairs."""
    idx = np.minimum((p * bins).astype(int), bins - 1)
    total = p.size
    out = 0.0
    for b in range(bins):
        mask = idx == b
        if mask.sum() == 0:
            continue
        out += (mask.sum() / total) * abs(y[mask].mean() - p[mask].mean())
    return out


class TestEceMatrixAgainstOracle:
    def test_matrix_ece_pools_all_pairs(self):
        rng = np.random.default_rng(1)
        probs = rng.random((30, 4))
        labels = rng.integers(0, 4, size=30)
        onehot = np.zeros((30, 4))
        onehot[np.arange(30), labels] = 1
        expected = _pooled_ece(probs.ravel(), onehot.ravel(), bins=10)
        assert ece(probs, labels, bins=10) == pytest.approx(expected, abs=1e-12)


class TestMcNemar:
    @pytest.mark.parametrize("n01,n10,chi2_expected,p_expected", MCNEMAR_ORACLE)
    def test_published_contingency_values(self, n01, n10, chi2_expected, p_expected):
        chi2, p = mcnemar(ContingencyTable(n00=0, n01=n01, n10=n10, n11=0))
        assert chi2 == pytest.approx(chi2_expected, abs=0.05)
        if p_expected is None:
            assert p < 0.001
        else:
            assert p == pytest.approx(p_expected, abs=0.001)

    def test_no_discordant_pairs(self):
        assert mcnemar(ContingencyTable(5, 0, 0, 5)) == (0.0, 1.0)

    def test_continuity_floor(self):
        # |n01 - n10| = 0 with discordant pairs: corrected statistic floors at 0
        chi2, p = mcnemar(ContingencyTable(0, 7, 7, 0))
        assert chi2 == 0.0
        assert p == pytest.approx(1.0)

    def test_negative_counts_rejected(self):
        with pytest.raises(MetricsError):
            mcnemar(ContingencyTable(-1, 2, 3, 4))

    def test_from_flags(self):
        base = np.array([True, True, False, False])
        cand = np.array([True, False, True, False])
        t = ContingencyTable.from_flags(base, cand)
        assert (t.n11, t.n01, t.n10, t.n00) == (1, 1, 1, 1)


class TestBonferroni:
    def test_six_comparisons_threshold(self):
        flags = bonferroni([0.845, 0.0001, 0.009, 0.0082, 0.34, 0.27], 0.05)
        # threshold 0.05/6 = 0.008333...
        assert flags == [False, True, False, True, False, False]

    def test_zero_p_always_significant(self):
        assert bonferroni([0.0], 0.05) == [True]

    def test_boundary_equality_not_significant(self):
        # p exactly at the corrected threshold fails the strict inequality
        p = 0.05 / 6
        flags = bonferroni([p] * 6, 0.05)
        assert flags == [False] * 6

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            bonferroni([], 0.05)

    def test_format_p(self):
        assert format_p(0.0004) == "<0.001"
        assert format_p(0.845) == "0.845"


class TestConfusionPairs:
    NAMES = ["A", "B", "C"]

    def test_perfect_predictions_empty(self):
        labels = np.array([0, 1, 2])
        assert confusion_pairs(labels.copy(), labels, self.NAMES) == []

    def test_hand_fixture(self):
        # 3 of 4 class-A docs predicted B
        labels = np.array([0, 0, 0, 0, 1])
        preds = np.array([1, 1, 1, 0, 1])
        rows = confusion_pairs(preds, labels, self.NAMES)
        assert rows[0] == ("A", "B", 3, 75.0)

    def test_sorted_by_count_then_name(self):
        labels = np.array([0, 0, 1, 1, 2, 2])
        preds = np.array([1, 1, 0, 0, 0, 1])
        rows = confusion_pairs(preds, labels, self.NAMES)
        counts = [r[2] for r in rows]
        assert counts == sorted(counts, reverse=True)
        two_count = [r for r in rows if r[2] == 2]
        assert two_count == sorted(two_count)


class TestStratifiedBins:
    def test_one_value_per_bin(self):
        keys = np.array([10, 30, 70, 200, 600])
        values = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
        bins = stratified_bins(values, keys, CLASS_SIZE_EDGES)
        assert [b[2] for b in bins] == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5])
        assert all(b[3] == 1 for b in bins)

    def test_boundary_value_goes_to_upper_bin(self):
        bins = stratified_bins(np.array([1.0]), np.array([20]), CLASS_SIZE_EDGES)
        assert bins[1][3] == 1 and bins[0][3] == 0

    def test_word_count_edges_shape(self):
        bins = stratified_bins(np.array([1.0, 0.0]), np.array([150, 2000]), WORD_COUNT_EDGES)
        assert len(bins) == 5
        assert bins[0][3] == 1 and bins[4][3] == 1

    def test_empty_bin_mean_is_nan(self):
        bins = stratified_bins(np.array([1.0]), np.array([10]), CLASS_SIZE_EDGES)
        assert np.isnan(bins[2][2])


class TestBruteForceAgreement:
    def test_hundred_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            probs = rng.random((10, 5))
            labels = rng.integers(0, 5, size=10)
            thresholds = rng.uniform(0.2, 0.8, size=5)
            decisions = binarize(probs, thresholds)
            onehot = np.zeros((10, 5), dtype=int)
            onehot[np.arange(10), labels] = 1

            # naive per-label F1
            f1s = []
            for k in range(5):
                tp = fp = fn = 0
                for i in range(10):
                    pred = probs[i, k] >= thresholds[k]
                    true = onehot[i, k] == 1
                    tp += pred and true
                    fp += pred and not true
                    fn += (not pred) and true
                f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
            assert macro_f1(decisions, labels, 5) == pytest.approx(np.mean(f1s), abs=1e-15)
            np.testing.assert_allclose(per_label_f1(decisions, labels, 5), f1s, atol=1e-15)

            # naive hamming
            wrong = sum(
                int(decisions[i, k]) != onehot[i, k] for i in range(10) for k in range(5)
            )
            assert hamming_loss(decisions, labels, 5) == pytest.approx(wrong / 50)

            # naive accuracy / micro
            preds = [int(np.argmax(probs[i])) for i in range(10)]
            acc = sum(p == l for p, l in zip(preds, labels)) / 10
            micro, accuracy = micro_accuracy_block(probs, labels)
            assert accuracy == pytest.approx(acc)
            assert micro == pytest.approx(acc)

            # naive pooled ece
            expected_ece = _pooled_ece(probs.ravel(), onehot.astype(float).ravel(), 10)
            assert ece(probs, labels, 10) == pytest.approx(expected_ece, abs=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        probs = rng.random((20, 4))
        labels = rng.integers(0, 4, size=20)
        thresholds = np.full(4, 0.5)
        perm = rng.permutation(20)
        a = (
            macro_f1(binarize(probs, thresholds), labels, 4),
            micro_accuracy_block(probs, labels),
            hamming_loss(binarize(probs, thresholds), labels, 4),
            ece(probs, labels),
        )
        b = (
            macro_f1(binarize(probs[perm], thresholds), labels[perm], 4),
            micro_accuracy_block(probs[perm], labels[perm]),
            hamming_loss(binarize(probs[perm], thresholds), labels[perm], 4),
            ece(probs[perm], labels[perm]),
        )
        assert a == b


class TestEvaluateBundle:
    def test_report_fields_populated(self):
        rng = np.random.default_rng(4)
        probs = rng.random((20, 3))
        labels = rng.integers(0, 3, size=20)
        report = evaluate(
            probs, labels, np.full(3, 0.5), ["A", "B", "C"],
            train_counts=np.array([30, 10, 5]),
            word_counts=rng.integers(50, 1500, size=20),
            mode="B6",
        )
        assert 0.0 <= report.macro_f1 <= 1.0
        assert report.micro_f1 == report.accuracy
        assert len(report.per_label_f1) == 3
        assert len(report.class_size_bins) == 5
        assert len(report.length_bins) == 5
        text = report.render()
        assert "macro_f1" in text and "B6" in text
