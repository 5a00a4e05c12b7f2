from __future__ import annotations

import warnings

import numpy as np

from .._distance import k_nearest, squared_distances
from ..exceptions import AtRiskWarning
from .base import BinaryClassifier


class KNearestNeighbors(BinaryClassifier):
    """Majority vote over the k nearest training rows (Euclidean).

    The score is the fraction of at-risk neighbors. Equal distances are
    ordered by training index. ``predict`` at the default threshold breaks a
    split vote in favour of the single nearest neighbor; explicit thresholds
    use the plain ``score >= threshold`` rule.
    """

    requires_both_classes = False
    uses_standardization = True

    def __init__(self, k=5, standardize=True):
        self.k = k
        self.standardize = standardize

    def _fit(self, X, y):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.X_train_ = X.copy()
        self.y_train_ = y.copy()

    def _effective_k(self):
        n = self.X_train_.shape[0]
        if self.k > n:
            warnings.warn(f"k={self.k} exceeds {n} training rows; using k={n}", AtRiskWarning, stacklevel=3)
            return n
        return self.k

    def kneighbors(self, X):
        return self._kneighbors(self._check_X(X))

    def _kneighbors(self, X):
        return k_nearest(squared_distances(X, self.X_train_), self._effective_k())

    def _scores(self, X):
        return self.y_train_[self._kneighbors(X)].mean(axis=1)

    def predict(self, X, threshold=0.5):
        if threshold != 0.5:
            return super().predict(X, threshold)
        Xs = self._check_X(X)
        nn = self._kneighbors(Xs)
        votes = self.y_train_[nn]
        score = votes.mean(axis=1)
        labels = (score > 0.5).astype(np.int64)
        tie = score == 0.5
        labels[tie] = votes[tie, 0]
        return labels

    def _get_state(self):
        return {"X": self.X_train_.tolist(), "y": self.y_train_.tolist()}

    def _set_state(self, state):
        self.X_train_ = np.array(state["X"], dtype=float).reshape(-1, self.n_features_in_)
        self.y_train_ = np.array(state["y"], dtype=np.int64)
