"""Feature ranking by correlation with the target and by forest importance."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DataError
from .models import RandomForest
from .preprocess import FeatureMatrix


class Correlation(NamedTuple):
    score: float
    degenerate: bool = False


def point_biserial_correlation(column, labels) -> Correlation:
    """Pearson correlation of a numeric column with 0/1 labels.

    A constant column or single-class labels give ``Correlation(0.0, True)``.
    """
    x = np.asarray(column, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.shape != y.shape:
        raise DataError("column and labels differ in length")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = xc @ xc
    syy = yc @ yc
    if sxx == 0 or syy == 0:
        return Correlation(0.0, True)
    r = (xc @ yc) / np.sqrt(sxx * syy)
    return Correlation(float(np.clip(r, -1.0, 1.0)), False)


@dataclass(frozen=True)
class FeatureRanking:
    entries: tuple[tuple[str, float], ...]
    method: str
    degenerate: frozenset[str] = frozenset()

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "feature", "score", "method"])
        for i, (name, score) in enumerate(self.entries, start=1):
            w.writerow([i, name, f"{score:.12g}", self.method])
        return buf.getvalue()


@dataclass(frozen=True)
class FeatureSubset:
    features: tuple[str, ...]
    method: str
    scores: tuple[float, ...]


def _column_groups(matrix):
    if isinstance(matrix, FeatureMatrix):
        return matrix.values, matrix.groups()
    values = np.asarray(matrix, dtype=float)
    return values, {f"x{j}": [j] for j in range(values.shape[1])}


def rank_by_correlation(matrix, labels) -> FeatureRanking:
    """Rank features by |r| with the labels.

    A one-hot feature scores as its strongest level. Degenerate features go
    last; ties within a block are broken by feature name.
    """
    values, groups = _column_groups(matrix)
    y = np.asarray(labels)
    scored, degenerate = [], []
    for name, idx in groups.items():
        best = None
        for j in idx:
            c = point_biserial_correlation(values[:, j], y)
            if not c.degenerate and (best is None or abs(c.score) > abs(best)):
                best = c.score
        if best is None:
            degenerate.append(name)
        else:
            scored.append((name, best))
    if not scored:
        raise DataError("every feature is constant (or the labels hold one class); nothing to rank")
    scored.sort(key=lambda e: (-abs(e[1]), e[0]))
    entries = tuple(scored) + tuple((n, 0.0) for n in sorted(degenerate))
    return FeatureRanking(entries, "correlation", frozenset(degenerate))


def forest_importance(matrix, labels, forest: RandomForest | None = None) -> FeatureRanking:
    """Rank features by Gini importance of a seeded random forest.

    Importances are impurity decreases summed over all splits of all trees
    and normalized to sum to 1; one-hot levels add up to their feature.
    """
    values, groups = _column_groups(matrix)
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise DataError("forest importance needs both classes in the labels")
    forest = forest if forest is not None else RandomForest()
    forest.fit(values, y)
    imp = forest.feature_importances_
    scored = [(name, float(imp[idx].sum())) for name, idx in groups.items()]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return FeatureRanking(tuple(scored), "forest_importance")


def select_top_k(ranking: FeatureRanking, k: int) -> FeatureSubset:
    if not 1 <= k <= len(ranking):
        raise DataError(f"k={k} out of range for {len(ranking)} ranked features")
    top = ranking.entries[:k]
    return FeatureSubset(tuple(n for n, _ in top), ranking.method, tuple(s for _, s in top))


class TopKSelector(TransformerMixin, BaseEstimator):
    """Keep the k best-ranked features of a :class:`FeatureMatrix`."""

    def __init__(self, k=10, method="correlation", random_state=0):
        self.k = k
        self.method = method
        self.random_state = random_state

    def fit(self, X: FeatureMatrix, y):
        if self.method == "correlation":
            self.ranking_ = rank_by_correlation(X, y)
        elif self.method == "forest_importance":
            self.ranking_ = forest_importance(X, y, RandomForest(random_state=self.random_state))
        else:
            raise DataError(f"unknown ranking method {self.method!r}")
        self.subset_ = select_top_k(self.ranking_, self.k)
        return self

    def transform(self, X: FeatureMatrix) -> FeatureMatrix:
        return X.select_features(self.subset_.features)

    def get_feature_names_out(self, input_features=None) -> Sequence[str]:
        return list(self.subset_.features)
