"""Scikit-learn style front end for the mixture-of-experts recommender."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .model import (
    ModelDims,
    TrainConfig,
    forward_batch,
    init_model,
    train_two_stage,
)


def check_feature_matrix(X, expected_dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if expected_dim is not None and X.shape[1] != expected_dim:
        raise ValueError(f"feature matrix has {X.shape[1]} columns, expected {expected_dim}")
    return X


def check_binary_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n_samples:
        raise ValueError(f"got {y.shape[0]} labels for {n_samples} samples")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("labels must be binary (0 or 1)")
    return y


class ExpertMixtureRecommender(BaseEstimator):
    """Two-tower mixture-of-experts with the standard fit/predict surface.

    ``fit`` runs the full two-stage schedule: the confidence side first,
    then the ranking head and gate alone. ``ranking_pairs`` are indices of
    (positive, negative) rows; when omitted, every positive is paired with
    every negative.
    """

    def __init__(
        self,
        n_experts: int = 3,
        expert_hidden_dim: int = 256,
        expert_out_dim: int = 128,
        tower_hidden_dim: int = 64,
        epochs_total: int = 100,
        stage_boundary: int = 50,
        lambda_entropy: float = 0.01,
        lambda_auc: float = 0.5,
        margin: float = 1.0,
        learning_rate: float = 1e-2,
        batch_size: int = 64,
        entropy_bonus: bool = True,
        random_state: int = 0,
    ):
        self.n_experts = n_experts
        self.expert_hidden_dim = expert_hidden_dim
        self.expert_out_dim = expert_out_dim
        self.tower_hidden_dim = tower_hidden_dim
        self.epochs_total = epochs_total
        self.stage_boundary = stage_boundary
        self.lambda_entropy = lambda_entropy
        self.lambda_auc = lambda_auc
        self.margin = margin
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.entropy_bonus = entropy_bonus
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            n_experts=self.n_experts,
            epochs_total=self.epochs_total,
            stage_boundary=self.stage_boundary,
            lambda_entropy=self.lambda_entropy,
            lambda_auc=self.lambda_auc,
            margin=self.margin,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.random_state,
            entropy_bonus=self.entropy_bonus,
        )

    def fit(self, X, y, ranking_pairs: list[tuple[int, int]] | None = None) -> "ExpertMixtureRecommender":
        X = check_feature_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        if ranking_pairs is None:
            positives = np.flatnonzero(y == 1.0)
            negatives = np.flatnonzero(y == 0.0)
            ranking_pairs = [(int(p), int(q)) for p in positives for q in negatives]
        dims = ModelDims(
            input_dim=X.shape[1],
            expert_hidden_dim=self.expert_hidden_dim,
            expert_out_dim=self.expert_out_dim,
            tower_hidden_dim=self.tower_hidden_dim,
        )
        model = init_model(dims, self.n_experts, self.random_state)
        result = train_two_stage(model, X, y, ranking_pairs, self._train_config())
        self.model_ = result.model
        self.loss_trace_ = result.loss_trace
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("this recommender has not been fitted yet")

    def predict_confidence(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_feature_matrix(X, self.n_features_in_)
        return forward_batch(self.model_, X).confidence

    def predict_rank_score(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_feature_matrix(X, self.n_features_in_)
        return forward_batch(self.model_, X).rank_score

    def predict(self, X) -> np.ndarray:
        return (self.predict_confidence(X) >= 0.5).astype(int)
