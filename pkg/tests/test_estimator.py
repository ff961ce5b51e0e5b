from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from revmatch.estimator import (
    ExpertMixtureRecommender,
    check_binary_labels,
    check_feature_matrix,
)
from revmatch.model import models_equal


def separable_data(n: int = 24, dim: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    half = n // 2
    X[:half, 0] = np.abs(X[:half, 0]) + 0.5
    X[half:, 0] = -np.abs(X[half:, 0]) - 0.5
    y = (X[:, 0] > 0).astype(float)
    return X, y


def small_recommender(**overrides) -> ExpertMixtureRecommender:
    defaults = dict(
        n_experts=2,
        expert_hidden_dim=8,
        expert_out_dim=4,
        tower_hidden_dim=4,
        epochs_total=40,
        stage_boundary=20,
        learning_rate=0.2,
        batch_size=8,
        random_state=1,
    )
    defaults.update(overrides)
    return ExpertMixtureRecommender(**defaults)


class TestValidationHelpers:
    def test_feature_matrix_coercion(self):
        X = check_feature_matrix([[1, 2], [3, 4]])
        assert X.dtype == float
        assert X.shape == (2, 2)

    def test_feature_matrix_rejects_1d(self):
        with pytest.raises(ValueError, match="2-d"):
            check_feature_matrix([1.0, 2.0])

    def test_feature_matrix_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            check_feature_matrix([[np.nan, 1.0]])

    def test_feature_matrix_checks_width(self):
        with pytest.raises(ValueError, match="expected 3"):
            check_feature_matrix([[1.0, 2.0]], expected_dim=3)

    def test_binary_labels(self):
        y = check_binary_labels([0, 1, 1], 3)
        assert y.tolist() == [0.0, 1.0, 1.0]
        with pytest.raises(ValueError, match="3 labels for 2 samples"):
            check_binary_labels([0, 1, 1], 2)
        with pytest.raises(ValueError, match="binary"):
            check_binary_labels([0, 2, 1], 3)
        with pytest.raises(ValueError, match="binary"):
            check_binary_labels([0.5, 1.0], 2)


class TestSklearnSurface:
    def test_get_params_round_trips_through_clone(self):
        est = small_recommender(n_experts=4, margin=2.0)
        params = est.get_params()
        assert params["n_experts"] == 4
        assert params["margin"] == 2.0
        twin = clone(est)
        assert twin.get_params() == params
        with pytest.raises(NotFittedError):
            twin.predict(np.zeros((1, 4)))

    def test_set_params(self):
        est = small_recommender()
        est.set_params(learning_rate=0.01, entropy_bonus=False)
        assert est.learning_rate == 0.01
        assert est.entropy_bonus is False


class TestFitPredict:
    def test_learns_a_separable_problem(self):
        X, y = separable_data()
        est = small_recommender()
        assert est.fit(X, y) is est
        predictions = est.predict(X)
        assert predictions.shape == (len(y),)
        assert set(np.unique(predictions)) <= {0, 1}
        assert (predictions == y).mean() >= 0.9

        confidence = est.predict_confidence(X)
        assert np.all((confidence > 0) & (confidence < 1))
        scores = est.predict_rank_score(X)
        assert np.all(np.isfinite(scores))
        assert len(est.loss_trace_) == est.epochs_total
        assert est.n_features_in_ == X.shape[1]

    def test_default_pairs_are_all_positive_negative_combinations(self):
        X, y = separable_data(n=12)
        explicit_pairs = [
            (int(p), int(q))
            for p in np.flatnonzero(y == 1.0)
            for q in np.flatnonzero(y == 0.0)
        ]
        auto = small_recommender(epochs_total=6, stage_boundary=3).fit(X, y)
        manual = small_recommender(epochs_total=6, stage_boundary=3).fit(
            X, y, ranking_pairs=explicit_pairs
        )
        assert models_equal(auto.model_, manual.model_)

    def test_fit_is_deterministic(self):
        X, y = separable_data()
        a = small_recommender(epochs_total=6, stage_boundary=3).fit(X, y)
        b = small_recommender(epochs_total=6, stage_boundary=3).fit(X, y)
        assert models_equal(a.model_, b.model_)
        assert a.loss_trace_ == b.loss_trace_

    def test_predict_requires_fit(self):
        with pytest.raises(NotFittedError):
            small_recommender().predict_confidence(np.zeros((2, 4)))

    def test_predict_checks_feature_width(self):
        X, y = separable_data()
        est = small_recommender(epochs_total=2, stage_boundary=1).fit(X, y)
        with pytest.raises(ValueError, match="columns"):
            est.predict(np.zeros((2, X.shape[1] + 1)))

    def test_fit_validates_labels(self):
        X, _ = separable_data()
        with pytest.raises(ValueError, match="binary"):
            small_recommender().fit(X, np.full(len(X), 0.3))
