"""The six screening classifiers behind one train/score contract."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..exceptions import ConfigError, DataError
from ..preprocess import FeatureMatrix
from .base import BinaryClassifier, MajorityClassifier
from .bayes import GaussianNaiveBayes
from .linear import LinearSVM, LogisticRegression, hinge_subgradient, logreg_loss_gradient, sigmoid
from .neighbors import KNearestNeighbors
from .tree import DecisionTree, RandomForest, best_axis_split, bootstrap_indices, gini_impurity

MODEL_KINDS: dict[str, type[BinaryClassifier]] = {
    "logreg": LogisticRegression,
    "linear_svm": LinearSVM,
    "gnb": GaussianNaiveBayes,
    "knn": KNearestNeighbors,
    "dtree": DecisionTree,
    "rforest": RandomForest,
}
BASELINE_KINDS = {"majority": MajorityClassifier}
DEFAULT_MODELS = tuple(MODEL_KINDS)

DISPLAY_NAMES = {
    "logreg": "Logistic Regression",
    "linear_svm": "Linear SVM",
    "gnb": "Naive Bayes",
    "knn": "KNN",
    "dtree": "Decision Tree",
    "rforest": "Random Forest",
    "majority": "Majority Baseline",
}

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        cls = _kind_class(self.kind)
        valid = cls().get_params()
        bad = sorted(set(self.hyperparameters) - set(valid))
        if bad:
            raise ConfigError(f"{self.kind}: unknown hyperparameter(s) {bad}; valid: {sorted(valid)}")
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    def build(self) -> BinaryClassifier:
        cls = _kind_class(self.kind)
        params = dict(self.hyperparameters)
        if "random_state" in cls().get_params() and "random_state" not in params:
            params["random_state"] = self.seed
        return cls(**params)


def _kind_class(kind):
    try:
        return MODEL_KINDS[kind] if kind in MODEL_KINDS else BASELINE_KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}") from None


def _as_array(X):
    if isinstance(X, FeatureMatrix):
        return X.values, X.names
    return np.asarray(X, dtype=float), None


def train(spec: ModelSpec, X, y) -> BinaryClassifier:
    values, names = _as_array(X)
    if values.size == 0:
        raise DataError("cannot train on an empty matrix")
    model = spec.build().fit(values, np.asarray(y))
    model.kind_ = spec.kind
    model.feature_names_ = tuple(names) if names is not None else None
    return model


def _check_columns(model, X):
    values, names = _as_array(X)
    expected = getattr(model, "feature_names_", None)
    if names is not None and expected is not None and tuple(names) != tuple(expected):
        raise DataError(f"column mismatch: model trained on {list(expected)}, got {list(names)}")
    return values


def predict_scores(model: BinaryClassifier, X) -> np.ndarray:
    return model.predict_scores(_check_columns(model, X))


def predict_labels(model: BinaryClassifier, X, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return model.predict(_check_columns(model, X), threshold)


def model_to_dict(model: BinaryClassifier) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind_,
        "hyperparameters": {k: v for k, v in model.get_params().items() if not isinstance(v, np.random.Generator)},
        "feature_names": list(model.feature_names_) if model.feature_names_ is not None else None,
        "parameters": model.get_state(),
    }


def model_from_dict(data: Mapping) -> BinaryClassifier:
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {data.get('format_version')!r}")
    model = _kind_class(data["kind"])(**data["hyperparameters"])
    model.set_state(data["parameters"])
    model.kind_ = data["kind"]
    names = data.get("feature_names")
    model.feature_names_ = tuple(names) if names is not None else None
    return model


def save_model(model: BinaryClassifier, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> BinaryClassifier:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "BinaryClassifier", "MajorityClassifier", "LogisticRegression", "LinearSVM", "GaussianNaiveBayes",
    "KNearestNeighbors", "DecisionTree", "RandomForest", "ModelSpec", "MODEL_KINDS", "DEFAULT_MODELS",
    "DISPLAY_NAMES", "train", "predict_scores", "predict_labels", "model_to_dict", "model_from_dict",
    "save_model", "load_model", "logreg_loss_gradient", "hinge_subgradient", "sigmoid", "gini_impurity",
    "best_axis_split", "bootstrap_indices",
]
