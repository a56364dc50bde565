"""TF-IDF fitting, OvR logistic regression, leak-freedom."""

import numpy as np
import pytest

from labelnet.baseline import (
    balanced_weights,
    fit_baseline,
    fit_binary_logreg,
    fit_ovr_logreg,
    fit_tfidf,
    load_baseline,
    predict_baseline,
    save_baseline,
    transform,
)


class TestFitTfidf:
    def test_term_in_every_document_has_idf_one(self):
        model = fit_tfidf(["apple pie", "apple cake", "apple tart"])
        # ln((1+3)/(1+3)) + 1 = 1.0
        assert model.idf[model.vocabulary["apple"]] == pytest.approx(1.0)

    def test_term_in_one_of_three(self):
        model = fit_tfidf(["apple pie", "banana cake", "banana tart"])
        # ln(4/2) + 1 = 1.6931...
        assert model.idf[model.vocabulary["apple"]] == pytest.approx(np.log(2.0) + 1.0)

    def test_includes_bigrams(self):
        model = fit_tfidf(["alpha beta gamma"])
        assert "alpha beta" in model.vocabulary
        assert "beta gamma" in model.vocabulary

    def test_max_features_by_frequency_then_lexicographic(self):
        docs = ["zz zz zz", "aa bb", "aa"]
        model = fit_tfidf(docs, max_features=2)
        # counts: zz=3, aa=2, others 1; top-2 = {zz, aa}
        assert set(model.vocabulary) == {"zz", "aa"}

    def test_empty_document_becomes_zero_row(self):
        model = fit_tfidf(["apple pie", "banana"])
        x = transform(model, ["...", "apple"])
        assert x.indptr[1] - x.indptr[0] == 0
        assert x.indptr[2] - x.indptr[1] == 1

    def test_rows_l2_normalized(self):
        model = fit_tfidf(["one two three", "two three four"])
        x = transform(model, ["one two two three"])
        row = x.data[x.indptr[0]:x.indptr[1]]
        assert np.linalg.norm(row) == pytest.approx(1.0)


class TestBalancedWeights:
    def test_formula(self):
        y = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 0.0])
        w = balanced_weights(y)
        assert w[0] == pytest.approx(6 / (2 * 2))
        assert w[-1] == pytest.approx(6 / (2 * 4))


class TestLogreg:
    def test_separable_1d_reaches_perfect_accuracy(self):
        # points at -2 and +2 on one feature, labels by sign
        from labelnet.baseline import CsrMatrix

        n = 20
        vals = np.array([-2.0] * 10 + [2.0] * 10)
        x = CsrMatrix(
            indptr=np.arange(n + 1, dtype=np.int64),
            indices=np.zeros(n, dtype=np.int64),
            data=vals,
            n_cols=1,
        )
        y = (vals > 0).astype(np.float64)
        w, b = fit_binary_logreg(x, y, balanced_weights(y))
        preds = (x.matvec(w, b) > 0).astype(float)
        assert np.array_equal(preds, y)

    def test_zero_feature_input_uses_bias_only(self):
        from labelnet.baseline import CsrMatrix

        x = CsrMatrix(
            indptr=np.zeros(9, dtype=np.int64),
            indices=np.empty(0, dtype=np.int64),
            data=np.empty(0),
            n_cols=3,
        )
        y = np.array([1, 1, 1, 1, 1, 1, 0, 0], dtype=np.float64)
        w, b = fit_binary_logreg(x, y, np.ones(8))
        np.testing.assert_array_equal(w, np.zeros(3))
        # bias-only optimum of unweighted BCE is the class prior log-odds
        assert 1 / (1 + np.exp(-b)) == pytest.approx(0.75, abs=1e-3)

    def test_doubling_weights_barely_moves_predictions(self):
        rng = np.random.default_rng(0)
        docs = [f"tok{i % 5} tok{i % 3}" for i in range(30)]
        labels = np.array([i % 2 for i in range(30)])
        model = fit_tfidf(docs)
        x = transform(model, docs)
        y = labels.astype(np.float64)
        s = balanced_weights(y)
        w1, b1 = fit_binary_logreg(x, y, s)
        w2, b2 = fit_binary_logreg(x, y, 2.0 * s)
        p1 = 1 / (1 + np.exp(-(x.matvec(w1, b1))))
        p2 = 1 / (1 + np.exp(-(x.matvec(w2, b2))))
        assert np.max(np.abs(p1 - p2)) <= 1e-3

    def test_final_loss_not_above_zero_weights(self):
        from labelnet.baseline import _objective

        rng = np.random.default_rng(1)
        docs = [f"w{rng.integers(6)} w{rng.integers(6)}" for _ in range(40)]
        y = (rng.random(40) > 0.5).astype(np.float64)
        model = fit_tfidf(docs)
        x = transform(model, docs)
        s = balanced_weights(y)
        w, b = fit_binary_logreg(x, y, s)
        assert _objective(x, y, s, w, b, 1e-4) <= _objective(x, y, s, np.zeros(x.n_cols), 0.0, 1e-4)


class TestBaselineModel:
    def _fixture(self):
        docs = (
            ["heart valve murmur cardiac"] * 6
            + ["bone fracture joint ortho"] * 6
            + ["skin rash lesion derm"] * 6
        )
        labels = np.array([0] * 6 + [1] * 6 + [2] * 6)
        return docs, labels

    def test_training_fixture_reproduces_fit_predictions(self):
        docs, labels = self._fixture()
        model = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        probs = predict_baseline(model, docs)
        assert np.array_equal(np.argmax(probs, axis=1), labels)

    def test_oov_document_is_bias_driven(self):
        docs, labels = self._fixture()
        model = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        probs = predict_baseline(model, ["zzz qqq completely unseen"])
        expected = 1 / (1 + np.exp(-model.biases))
        np.testing.assert_allclose(probs[0], expected, rtol=1e-12)

    def test_predictions_match_dot_product_oracle(self):
        docs, labels = self._fixture()
        model = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        test_docs = ["heart murmur", "joint bone", "rash skin", "heart rash", "bone"]
        probs = predict_baseline(model, test_docs)
        x = transform(model.tfidf, test_docs)
        for i in range(len(test_docs)):
            row = np.zeros(model.tfidf.idf.size)
            row[x.indices[x.indptr[i]:x.indptr[i + 1]]] = x.data[x.indptr[i]:x.indptr[i + 1]]
            for k in range(3):
                margin = row @ model.weights[k] + model.biases[k]
                assert probs[i, k] == pytest.approx(1 / (1 + np.exp(-margin)), rel=1e-10)

    def test_vocabulary_leak_freedom(self):
        docs, labels = self._fixture()
        model_a = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        model_b = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        # changing only non-training documents can never reach the model;
        # identical training inputs give identical models (determinism)
        assert model_a.tfidf.vocabulary == model_b.tfidf.vocabulary
        np.testing.assert_array_equal(model_a.weights, model_b.weights)
        np.testing.assert_array_equal(model_a.tfidf.idf, model_b.tfidf.idf)
        test_docs = ["anything else entirely", "heart"]
        probs_a = predict_baseline(model_a, test_docs)
        probs_b = predict_baseline(model_b, test_docs)
        np.testing.assert_array_equal(probs_a, probs_b)

    def test_checkpoint_round_trip(self, tmp_path):
        docs, labels = self._fixture()
        model = fit_baseline(docs, labels, ["Card", "Ortho", "Derm"])
        path = tmp_path / "b.ckpt"
        save_baseline(path, model, {"run.seed": 42})
        loaded = load_baseline(path)
        assert loaded.label_names == model.label_names
        assert loaded.tfidf.vocabulary == model.tfidf.vocabulary
        np.testing.assert_array_equal(loaded.weights, model.weights)
        probs_a = predict_baseline(model, ["heart murmur"])
        probs_b = predict_baseline(loaded, ["heart murmur"])
        np.testing.assert_array_equal(probs_a, probs_b)


def test_ovr_trains_k_independent_problems():
    docs = ["aa bb", "aa cc", "dd ee", "dd ff"]
    labels = np.array([0, 0, 1, 1])
    model = fit_tfidf(docs)
    x = transform(model, docs)
    weights, biases = fit_ovr_logreg(x, labels, 2)
    assert weights.shape == (2, len(model.vocabulary))
    probs0 = 1 / (1 + np.exp(-(x.matvec(weights[0], biases[0]))))
    assert probs0[0] > 0.5 and probs0[2] < 0.5
