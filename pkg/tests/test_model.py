"""Classifier fitting, attribution exactness, selection, and CV."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from risk_evidence.features import SparseVector, TfidfConfig, fit_tfidf, to_csr, transform_many
from risk_evidence.model import (
    DegenerateLabelsError,
    ExplainerBaseline,
    FeatureScore,
    LogRegModel,
    SelectionPolicy,
    TrainConfig,
    balanced_class_weights,
    classification_metrics,
    cross_validate,
    fit_logreg,
    load_baseline,
    load_logreg,
    logreg_objective,
    predict_proba,
    save_baseline,
    save_logreg,
    select_important,
    select_important_array,
    shap_score_array,
    shap_scores,
    stratified_fold_assignment,
)
from risk_evidence.synthetic import make_synthetic_corpus

from .oracles import central_difference_gradient, exact_shapley_linear


def sv(pairs: dict[int, float]) -> SparseVector:
    return SparseVector.from_pairs(pairs)


def dense_model(weights, bias=0.0, **kwargs) -> LogRegModel:
    return LogRegModel(
        weights=np.asarray(weights, dtype=np.float64),
        bias=bias,
        config=TrainConfig(),
        converged=True,
        grad_norm=0.0,
        n_iterations=0,
        **kwargs,
    )


class TestBalancedWeights:
    def test_eight_two_split(self):
        labels = [1] * 8 + [-1] * 2
        weights = balanced_class_weights(labels)
        assert weights[1] == pytest.approx(0.625)
        assert weights[-1] == pytest.approx(2.5)

    def test_even_split(self):
        weights = balanced_class_weights([1] * 5 + [-1] * 5)
        assert weights == {1: 1.0, -1: 1.0}

    def test_single_class_errors(self):
        with pytest.raises(DegenerateLabelsError, match="degenerate"):
            balanced_class_weights([1] * 10)

    def test_weights_sum_to_n(self):
        labels = [1] * 7 + [-1] * 3
        weights = balanced_class_weights(labels)
        assert weights[1] * 7 + weights[-1] * 3 == pytest.approx(10.0)


def random_problem(rng, n_samples=12, n_features=4):
    X = rng.normal(size=(n_samples, n_features))
    y = rng.choice([-1.0, 1.0], size=n_samples)
    if np.all(y == y[0]):
        y[0] = -y[0]
    from scipy import sparse

    return sparse.csr_matrix(X), y


class TestFitLogreg:
    def test_separable_toy_perfect_accuracy(self):
        X = [sv({0: 1.0}), sv({0: 0.9}), sv({1: 1.0}), sv({1: 0.8})]
        y = [1, 1, -1, -1]
        model = fit_logreg(X, y, n_features=2)
        assert model.converged
        preds = [1 if predict_proba(model, v) >= 0.5 else -1 for v in X]
        assert preds == y

    def test_loss_not_worse_than_zero_weights(self):
        rng = np.random.default_rng(0)
        X, y = random_problem(rng)
        weights = np.where(y > 0, 1.0, 1.0)
        model = fit_logreg(X, y, TrainConfig(class_weight="none"))
        theta_fit = np.concatenate([model.weights, [model.bias]])
        loss_fit, _ = logreg_objective(theta_fit, X, y, weights, 1.0)
        loss_zero, _ = logreg_objective(np.zeros(X.shape[1] + 1), X, y, weights, 1.0)
        assert loss_fit <= loss_zero

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            X, y = random_problem(rng, n_samples=10, n_features=3)
            sample_weights = rng.uniform(0.5, 2.0, size=10)
            c = float(rng.uniform(0.5, 2.0))
            theta = rng.normal(scale=0.5, size=4)

            def loss_only(t):
                return logreg_objective(t, X, y, sample_weights, c)[0]

            _, analytic = logreg_objective(theta, X, y, sample_weights, c)
            numeric = central_difference_gradient(loss_only, theta)
            assert np.max(np.abs(analytic - numeric)) <= 1e-5

    def test_gradient_norm_below_tolerance(self):
        rng = np.random.default_rng(7)
        X, y = random_problem(rng, n_samples=30, n_features=6)
        config = TrainConfig(tolerance=1e-6)
        model = fit_logreg(X, y, config)
        assert model.converged
        assert model.grad_norm <= config.tolerance

    def test_non_convergence_flagged_not_silent(self, caplog):
        rng = np.random.default_rng(3)
        X, y = random_problem(rng, n_samples=40, n_features=8)
        with caplog.at_level(logging.WARNING):
            model = fit_logreg(X, y, TrainConfig(max_iterations=1, tolerance=1e-12))
        assert not model.converged
        assert model.grad_norm > 0
        assert any("did not converge" in m for m in caplog.messages)

    def test_needs_both_classes(self):
        X = [sv({0: 1.0}), sv({0: 2.0})]
        with pytest.raises(DegenerateLabelsError):
            fit_logreg(X, [1, 1], n_features=1)


class TestPredictProba:
    def test_zero_model_is_half(self):
        model = dense_model([0.0, 0.0])
        assert predict_proba(model, sv({0: 1.0})) == pytest.approx(0.5)

    def test_monotone_in_margin(self):
        model = dense_model([1.0])
        probs = [predict_proba(model, sv({0: x})) for x in (-2.0, 0.0, 2.0, 5.0)]
        assert probs == sorted(probs)
        assert all(0.0 < p < 1.0 for p in probs)

    def test_negation_symmetry(self):
        model = dense_model([0.7, -0.3], bias=0.2)
        negated = dense_model([-0.7, 0.3], bias=-0.2)
        x = sv({0: 0.5, 1: 1.5})
        assert predict_proba(model, x) == pytest.approx(1.0 - predict_proba(negated, x))

    def test_dimension_mismatch(self):
        model = dense_model([1.0])
        with pytest.raises(ValueError, match="dimension"):
            predict_proba(model, sv({3: 1.0}))


class TestShapScores:
    def test_direct_substitution(self):
        model = dense_model([0.5])
        baseline = ExplainerBaseline(feature_means=np.array([0.1]))
        scores = shap_scores(model, sv({0: 0.2}), baseline)
        assert scores == [FeatureScore(index=0, ngram="f0", score=pytest.approx(0.05))]

    def test_baseline_value_scores_zero(self):
        model = dense_model([2.0, 1.0])
        baseline = ExplainerBaseline(feature_means=np.array([0.3, 0.0]))
        scores = shap_scores(model, sv({0: 0.3}), baseline)
        assert all(fs.index != 0 for fs in scores)

    def test_additivity(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=6)
        means = rng.uniform(0, 1, size=6)
        model = dense_model(w, bias=0.4)
        baseline = ExplainerBaseline(feature_means=means)
        x = sv({1: 0.5, 4: 0.25})
        total = sum(fs.score for fs in shap_scores(model, x, baseline))
        expected = float(w @ x.to_dense(6)) - float(w @ means)
        assert total == pytest.approx(expected, abs=1e-9)

    def test_matches_exact_shapley_enumeration(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            n = int(rng.integers(1, 9))
            w = rng.normal(size=n)
            means = rng.uniform(-1, 1, size=n)
            x_dense = rng.uniform(-1, 1, size=n)
            bias = float(rng.normal())
            model = dense_model(w, bias=bias)
            baseline = ExplainerBaseline(feature_means=means)
            vector = sv({i: float(x_dense[i]) for i in range(n)})
            got = shap_score_array(model, vector, baseline)
            expected = exact_shapley_linear(w, bias, x_dense, means)
            assert np.max(np.abs(got - expected)) <= 1e-9

    def test_column_weight_rescale_invariance(self):
        w = np.array([0.8, -0.2])
        means = np.array([0.3, 0.6])
        x = np.array([0.9, 0.1])
        model = dense_model(w)
        base = shap_score_array(model, sv(dict(enumerate(x))), ExplainerBaseline(means))
        c = 13.0
        scaled_model = dense_model(w / c)
        scaled = shap_score_array(
            scaled_model,
            sv(dict(enumerate(x * c))),
            ExplainerBaseline(means * c),
        )
        assert scaled == pytest.approx(list(base), abs=1e-12)

    def test_sorted_descending(self):
        model = dense_model([1.0, 1.0, 1.0])
        baseline = ExplainerBaseline(feature_means=np.zeros(3))
        scores = shap_scores(model, sv({0: 0.1, 1: 0.9, 2: 0.5}), baseline)
        assert [fs.index for fs in scores] == [1, 2, 0]


class TestSelectImportant:
    def fs(self, ngram, score, index=0):
        return FeatureScore(index=index, ngram=ngram, score=score)

    def test_non_positive_scores_excluded(self):
        scores = [self.fs("a", -0.5), self.fs("b", 0.0)]
        assert select_important(scores) == []

    def test_top_k_clamps(self):
        scores = [self.fs("a", 0.3), self.fs("b", 0.1)]
        assert len(select_important(scores, SelectionPolicy(top_k=10))) == 2

    def test_ties_break_lexicographically(self):
        scores = [self.fs("zebra", 0.5, 0), self.fs("apple", 0.5, 1), self.fs("mango", 0.5, 2)]
        kept = select_important(scores, SelectionPolicy(top_k=2))
        assert [fs.ngram for fs in kept] == ["apple", "mango"]

    def test_min_score_policy(self):
        scores = [self.fs("a", 0.5), self.fs("b", 0.2), self.fs("c", -0.1)]
        kept = select_important(scores, SelectionPolicy(top_k=None, min_score=0.2))
        assert [fs.ngram for fs in kept] == ["a", "b"]

    def test_array_variant_matches_list_variant(self):
        rng = np.random.default_rng(9)
        values = rng.normal(size=40)
        names = tuple(f"g{i:02d}" for i in range(40))
        as_list = [FeatureScore(i, names[i], float(values[i])) for i in range(40)]
        for policy in (SelectionPolicy(top_k=5), SelectionPolicy(top_k=None, min_score=0.1)):
            assert select_important_array(values, names, policy) == select_important(
                as_list, policy
            )


class TestCrossValidation:
    def test_fold_sizes_differ_at_most_one(self):
        y = np.array([1] * 13 + [-1] * 9)
        fold_of = stratified_fold_assignment(y, 5, seed=0)
        sizes = np.bincount(fold_of, minlength=5)
        assert sizes.max() - sizes.min() <= 1

    def test_stratification_preserves_ratio(self):
        y = np.array([1] * 20 + [-1] * 10)
        fold_of = stratified_fold_assignment(y, 5, seed=1)
        for f in range(5):
            members = y[fold_of == f]
            assert np.sum(members == 1) == 4
            assert np.sum(members == -1) == 2

    def test_insufficient_members(self):
        y = np.array([1] * 10 + [-1] * 3)
        with pytest.raises(DegenerateLabelsError, match="insufficient"):
            stratified_fold_assignment(y, 5, seed=0)

    def test_constant_prediction_balanced_accuracy_half(self):
        y_true = np.array([1] * 8 + [-1] * 2)
        y_pred = np.ones(10, dtype=int)
        metrics = classification_metrics(y_true, y_pred)
        assert metrics.balanced_accuracy == pytest.approx(0.5)
        assert metrics.accuracy == pytest.approx(0.8)

    def test_separable_corpus_high_accuracy(self):
        corpus = make_synthetic_corpus(n_users=40, seed=21)
        report = cross_validate(corpus, folds=5, seed=3)
        assert report.mean.accuracy >= 0.95
        assert len(report.folds) == 5

    def test_seeded_reproducibility(self):
        corpus = make_synthetic_corpus(n_users=24, seed=2)
        first = cross_validate(corpus, folds=4, seed=11)
        second = cross_validate(corpus, folds=4, seed=11)
        assert first == second


class TestSerialization:
    def test_logreg_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        X, y = random_problem(rng)
        model = fit_logreg(X, y)
        path = tmp_path / "clf.json"
        save_logreg(model, path, fingerprint="abc123")
        loaded = load_logreg(path)
        assert loaded.weights == pytest.approx(list(model.weights), abs=1e-15)
        assert loaded.bias == pytest.approx(model.bias)
        assert loaded.converged == model.converged

    def test_baseline_round_trip(self, tmp_path):
        baseline = ExplainerBaseline(feature_means=np.array([0.1, 0.0, 0.25]))
        path = tmp_path / "baseline.json"
        save_baseline(baseline, path)
        loaded = load_baseline(path)
        assert loaded.feature_means == pytest.approx(list(baseline.feature_means))


class TestPipelineOnTfidf:
    def test_fit_on_transformed_documents(self):
        docs = [
            "i want to die", "no way out now", "life feels hopeless",
            "nice walk today", "made a good dinner", "watched the game",
        ]
        y = [1, 1, 1, -1, -1, -1]
        tfidf = fit_tfidf(docs, TfidfConfig(ngram_min=1, ngram_max=2))
        X = to_csr(transform_many(tfidf, docs), tfidf.n_features)
        model = fit_logreg(X, y)
        assert model.converged
        probs = [predict_proba(model, v) for v in transform_many(tfidf, docs)]
        assert all(p > 0.5 for p in probs[:3])
        assert all(p < 0.5 for p in probs[3:])
