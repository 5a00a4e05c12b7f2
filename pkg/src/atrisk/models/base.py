from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import AtRiskWarning, DataError
from ..preprocess import Standardizer


def check_binary_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.size and not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0 (not at risk) or 1 (at risk)")
    return y.astype(np.int64)


class BinaryClassifier(ClassifierMixin, BaseEstimator):
    """Common fit/predict plumbing for the at-risk classifiers.

    Subclasses implement ``_fit(X, y)`` and ``_scores(X)``; the score is a
    probability-like value for the at-risk class. Labels follow the
    ``score >= threshold`` convention.
    """

    requires_both_classes = True
    uses_standardization = False

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = check_binary_labels(y)
        if np.unique(y).size < 2:
            if self.requires_both_classes:
                raise DataError(f"{type(self).__name__} needs both classes in the training labels")
            warnings.warn(f"{type(self).__name__} trained on a single class", AtRiskWarning, stacklevel=2)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        if self.uses_standardization and getattr(self, "standardize", False):
            self.scaler_ = Standardizer().fit(X)
        else:
            self.scaler_ = None
        self._fit(self._scale(X), y)
        return self

    def _scale(self, X):
        return X if self.scaler_ is None else self.scaler_.transform(X)

    def _check_X(self, X):
        check_is_fitted(self, "classes_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"model expects {self.n_features_in_} columns, got {X.shape[1]}")
        return self._scale(X)

    def predict_scores(self, X) -> np.ndarray:
        return self._scores(self._check_X(X))

    def predict_proba(self, X) -> np.ndarray:
        s = self.predict_scores(X)
        return np.column_stack([1.0 - s, s])

    def decision_function(self, X) -> np.ndarray:
        return self.predict_scores(X)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
        return (self.predict_scores(X) >= threshold).astype(np.int64)

    # serialization hooks: plain JSON-able dicts of fitted state
    def _get_state(self) -> dict:
        raise NotImplementedError

    def _set_state(self, state: dict) -> None:
        raise NotImplementedError

    def get_state(self) -> dict:
        check_is_fitted(self, "classes_")
        state = {"n_features_in": int(self.n_features_in_), **self._get_state()}
        if self.scaler_ is not None:
            state["scaler"] = {"mean": self.scaler_.mean_.tolist(), "std": self.scaler_.scale_.tolist()}
        return state

    def set_state(self, state: dict):
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(state["n_features_in"])
        self.scaler_ = None
        if "scaler" in state:
            s = Standardizer()
            s.mean_ = np.array(state["scaler"]["mean"], dtype=float)
            s.scale_ = np.array(state["scaler"]["std"], dtype=float)
            s.n_features_in_ = self.n_features_in_
            self.scaler_ = s
        self._set_state(state)
        return self


class MajorityClassifier(BinaryClassifier):
    """Constant baseline: always scores the training-set majority class."""

    requires_both_classes = False

    def _fit(self, X, y):
        self.majority_ = int(y.sum() * 2 > y.size)

    def _scores(self, X):
        return np.full(X.shape[0], float(self.majority_))

    def _get_state(self):
        return {"majority": self.majority_}

    def _set_state(self, state):
        self.majority_ = int(state["majority"])
