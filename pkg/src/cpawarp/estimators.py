"""Scikit-learn estimator wrappers around the alignment engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .align import (
    AlignmentConfig,
    _align_to_target,
    _as_batch,
    _Engine,
    align_joint,
    ncc_fit,
    ncc_predict,
)


def _to_config(est, random_state) -> AlignmentConfig:
    return AlignmentConfig(
        n_cells=est.n_cells,
        zero_boundary=est.zero_boundary,
        lambda_sigma=est.lambda_sigma,
        lambda_smooth=est.lambda_smooth,
        n_layers=est.n_layers,
        n_squarings=est.n_squarings,
        learning_rate=est.learning_rate,
        epochs=est.epochs,
        batch_size=est.batch_size,
        seed=0 if random_state is None else int(random_state),
    )


class JointAligner(TransformerMixin, BaseEstimator):
    """Transductive joint aligner: fit learns one warp stack per sample.

    fit_transform returns the aligned batch.  transform warps new signals
    toward the fitted barycenter with a short per-signal optimization, so the
    estimator composes with pipelines even though the training alignment is
    transductive.
    """

    def __init__(
        self,
        n_cells: int = 16,
        zero_boundary: bool = True,
        lambda_sigma: float = 1e-2,
        lambda_smooth: float = 0.5,
        n_layers: int = 1,
        n_squarings: int = 0,
        learning_rate: float = 1e-2,
        epochs: int = 200,
        batch_size: int | None = None,
        random_state: int | None = 0,
    ):
        self.n_cells = n_cells
        self.zero_boundary = zero_boundary
        self.lambda_sigma = lambda_sigma
        self.lambda_smooth = lambda_smooth
        self.n_layers = n_layers
        self.n_squarings = n_squarings
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        config = _to_config(self, self.random_state)
        labels = None if y is None else np.asarray(y)
        self.result_ = align_joint(X, config, labels=labels)
        self.aligned_ = self.result_.warped
        self.thetas_ = self.result_.thetas
        self.loss_data_ = self.result_.loss_data
        self.loss_reg_ = self.result_.loss_reg
        self.barycenter_ = self.aligned_.mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).aligned_

    def transform(self, X):
        check_is_fitted(self, "barycenter_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("transform length differs from fitted length")
        config = _to_config(self, self.random_state)
        batch, _ = _as_batch(X)
        eng = _Engine(X.shape[1], config)
        target = self.barycenter_[:, None]
        out = np.empty_like(X)
        for i in range(X.shape[0]):
            _, vals, _ = _align_to_target(eng, batch[i], target, config)
            out[i] = vals[:, 0]
        return out


class AlignedNearestCentroid(ClassifierMixin, BaseEstimator):
    """Nearest-centroid classifier on per-class jointly aligned averages."""

    def __init__(
        self,
        n_cells: int = 16,
        zero_boundary: bool = True,
        lambda_sigma: float = 1e-2,
        lambda_smooth: float = 0.5,
        n_layers: int = 1,
        n_squarings: int = 0,
        learning_rate: float = 1e-2,
        epochs: int = 200,
        batch_size: int | None = None,
        random_state: int | None = 0,
        predict_steps: int = 100,
    ):
        self.n_cells = n_cells
        self.zero_boundary = zero_boundary
        self.lambda_sigma = lambda_sigma
        self.lambda_smooth = lambda_smooth
        self.n_layers = n_layers
        self.n_squarings = n_squarings
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.predict_steps = predict_steps

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y length mismatch")
        config = _to_config(self, self.random_state)
        self.model_ = ncc_fit(X, y, config)
        self.classes_ = self.model_.classes
        self.centroids_ = self.model_.centroids[:, :, 0]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return ncc_predict(self.model_, X, n_steps=self.predict_steps)
