"""Encoding, single imputation and standardization of roster features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import AtRiskWarning, DataError
from .ingest import RosterSchema, StudentRecord, parse_bool

MAX_CATEGORIES = 64


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    feature: str
    kind: str  # numeric | boolean | categorical
    category: str | None = None  # performance | demographic | engagement
    level: str | None = None  # one-hot level for categorical columns

    @property
    def origin(self) -> str:
        return "one-hot" if self.kind == "categorical" else "raw"


@dataclass(frozen=True)
class FeatureMatrix:
    """Numeric grid plus per-column metadata. NaN marks a missing cell."""

    values: np.ndarray
    columns: tuple[ColumnMeta, ...]
    row_ids: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2, copy=True)
        if values.shape[1] != len(self.columns) and values.size:
            raise DataError(f"matrix has {values.shape[1]} columns but {len(self.columns)} column descriptors")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        if self.row_ids and len(self.row_ids) != values.shape[0]:
            raise DataError("row_ids do not align with matrix rows")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def shape(self):
        return self.values.shape

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_names(self) -> list[str]:
        seen: list[str] = []
        for c in self.columns:
            if c.feature not in seen:
                seen.append(c.feature)
        return seen

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def groups(self) -> dict[str, list[int]]:
        """Column indices per source feature (one-hot groups have several)."""
        out: dict[str, list[int]] = {}
        for j, c in enumerate(self.columns):
            out.setdefault(c.feature, []).append(j)
        return out

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        ids = tuple(np.asarray(self.row_ids, dtype=object)[rows]) if self.row_ids else ()
        return FeatureMatrix(self.values[rows], self.columns, ids)

    def select_features(self, features: Sequence[str]) -> "FeatureMatrix":
        groups = self.groups()
        unknown = [f for f in features if f not in groups]
        if unknown:
            raise DataError(f"unknown feature(s): {unknown}")
        cols = [j for f in features for j in groups[f]]
        return FeatureMatrix(self.values[:, cols], tuple(self.columns[j] for j in cols), self.row_ids)

    def with_values(self, values) -> "FeatureMatrix":
        return replace(self, values=values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _infer_kind(cells: list[str]) -> str:
    if not cells:
        return "numeric"
    try:
        for c in cells:
            float(c)
        return "numeric"
    except ValueError:
        pass
    try:
        for c in cells:
            parse_bool(c)
        return "boolean"
    except ValueError:
        return "categorical"


class FeatureEncoder(TransformerMixin, BaseEstimator):
    """Turn raw roster cells into a numeric :class:`FeatureMatrix`.

    Numeric cells pass through, booleans map to 0/1, and categorical
    features are one-hot encoded with levels in lexicographic order of the
    values seen during ``fit``. A level never seen in fit encodes as an
    all-zero group.
    """

    def __init__(self, schema: RosterSchema | None = None, max_categories: int = MAX_CATEGORIES):
        self.schema = schema
        self.max_categories = max_categories

    def fit(self, records: Sequence[StudentRecord], y=None):
        if not records:
            raise DataError("cannot encode an empty roster")
        features: list[str] = []
        for r in records:
            for name in r.features:
                if name not in features:
                    features.append(name)
        kinds, levels, tags = {}, {}, {}
        for name in features:
            cells = [r.features.get(name) for r in records]
            observed = [c for c in cells if c is not None]
            spec = self.schema.get(name) if self.schema is not None else None
            kind = spec.type if spec is not None and spec.type else _infer_kind(observed)
            tags[name] = spec.category if spec is not None else None
            if kind == "categorical":
                lv = sorted(set(observed))
                if len(lv) > self.max_categories:
                    raise DataError(
                        f"feature {name!r} has {len(lv)} distinct values (limit {self.max_categories}); "
                        "identifier-like columns must not be used as features"
                    )
                levels[name] = tuple(lv)
            kinds[name] = kind
        self.features_ = tuple(features)
        self.kinds_ = kinds
        self.levels_ = levels
        self.tags_ = tags
        cols = []
        for name in features:
            if kinds[name] == "categorical":
                cols.extend(ColumnMeta(f"{name}={lv}", name, "categorical", tags[name], lv) for lv in levels[name])
            else:
                cols.append(ColumnMeta(name, name, kinds[name], tags[name]))
        self.columns_ = tuple(cols)
        return self

    def transform(self, records: Sequence[StudentRecord]) -> FeatureMatrix:
        check_is_fitted(self, "columns_")
        n = len(records)
        out = np.full((n, len(self.columns_)), np.nan)
        j = 0
        unseen = 0
        for name in self.features_:
            kind = self.kinds_[name]
            if kind == "categorical":
                lv = self.levels_[name]
                for i, r in enumerate(records):
                    cell = r.features.get(name)
                    if cell is None:
                        continue
                    out[i, j:j + len(lv)] = 0.0
                    if cell in lv:
                        out[i, j + lv.index(cell)] = 1.0
                    else:
                        unseen += 1
                j += len(lv)
                continue
            for i, r in enumerate(records):
                if name not in r.features and n:
                    raise DataError(f"record {i} lacks feature column {name!r}")
                cell = r.features.get(name)
                if cell is None:
                    continue
                try:
                    out[i, j] = float(parse_bool(cell)) if kind == "boolean" else float(cell)
                except ValueError:
                    raise DataError(f"record {i}, column {name!r}: cannot read {cell!r} as {kind}") from None
            j += 1
        if unseen:
            warnings.warn(f"{unseen} cell(s) carried categories unseen during fit; encoded as all-zero", AtRiskWarning, stacklevel=2)
        ids = tuple(r.student_id for r in records) if all(r.pseudonymized for r in records) else ()
        return FeatureMatrix(out, self.columns_, ids)


def encode_features(records: Sequence[StudentRecord], schema: RosterSchema | None = None) -> FeatureMatrix:
    return FeatureEncoder(schema).fit(records).transform(records)


@dataclass(frozen=True)
class ImputationEntry:
    column: str
    strategy: str
    fill_value: float
    count: int


@dataclass(frozen=True)
class ImputationReport:
    entries: tuple[ImputationEntry, ...] = field(default_factory=tuple)

    @property
    def total_filled(self) -> int:
        return sum(e.count for e in self.entries)

    def to_text(self) -> str:
        lines = ["column,strategy,fill_value,count"]
        for e in self.entries:
            lines.append(f"{e.column},{e.strategy},{e.fill_value!r},{e.count}")
        return "\n".join(lines) + "\n"


class MedianModeImputer(TransformerMixin, BaseEstimator):
    """Single imputation: numeric median, boolean mode, modal level for one-hot groups.

    Median ties average the two middle order statistics. Mode ties go to the
    smaller boolean value or the lexicographically first level.
    """

    def fit(self, X: FeatureMatrix, y=None):
        values = X.values
        fill = np.zeros(values.shape[1])
        strategy = [""] * values.shape[1]
        for feature, idx in X.groups().items():
            block = values[:, idx]
            observed = ~np.isnan(block).any(axis=1)
            if not observed.any():
                raise DataError(f"column {feature!r} has no observed values to impute from")
            kind = X.columns[idx[0]].kind
            obs = block[observed]
            if kind == "numeric":
                fill[idx[0]] = float(np.median(obs[:, 0]))
                strategy[idx[0]] = "median"
            elif kind == "boolean":
                ones = int((obs[:, 0] == 1).sum())
                fill[idx[0]] = 1.0 if ones > len(obs) - ones else 0.0
                strategy[idx[0]] = "mode"
            else:
                counts = obs.sum(axis=0)
                best = int(np.argmax(counts))  # first maximum, levels are sorted
                fill[idx] = 0.0
                fill[idx[best]] = 1.0
                for j in idx:
                    strategy[j] = "mode"
        self.fill_values_ = fill
        self.strategies_ = tuple(strategy)
        self.columns_ = X.columns
        return self

    def transform(self, X: FeatureMatrix) -> FeatureMatrix:
        check_is_fitted(self, "fill_values_")
        if tuple(c.name for c in X.columns) != tuple(c.name for c in self.columns_):
            raise DataError("imputer applied to a matrix with different columns")
        values = X.values.copy()
        entries = []
        for feature, idx in X.groups().items():
            rows = np.isnan(values[:, idx]).any(axis=1)
            for j in idx:
                values[rows, j] = self.fill_values_[j]
                entries.append(ImputationEntry(X.columns[j].name, self.strategies_[j], float(self.fill_values_[j]), int(rows.sum())))
        self.report_ = ImputationReport(tuple(entries))
        return X.with_values(values)


def impute_missing(matrix: FeatureMatrix) -> tuple[FeatureMatrix, ImputationReport]:
    imp = MedianModeImputer().fit(matrix)
    out = imp.transform(matrix)
    return out, imp.report_


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray
    fitted_rows: tuple[int, ...] = ()


class Standardizer(TransformerMixin, BaseEstimator):
    """z = (x - mean) / std with population std; zero-variance columns map to 0."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        constant = self.scale_ == 0
        if constant.any():
            warnings.warn(f"{int(constant.sum())} constant column(s) standardize to zero", AtRiskWarning, stacklevel=2)
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        safe = np.where(self.scale_ == 0, 1.0, self.scale_)
        z = (X - self.mean_) / safe
        z[:, self.scale_ == 0] = 0.0
        return z

    @property
    def params(self) -> StandardizationParams:
        return StandardizationParams(self.mean_.copy(), self.scale_.copy())

    @classmethod
    def from_params(cls, params: StandardizationParams) -> "Standardizer":
        s = cls()
        s.mean_ = np.asarray(params.mean, dtype=float)
        s.scale_ = np.asarray(params.std, dtype=float)
        s.n_features_in_ = s.mean_.size
        return s


def fit_standardization(matrix: FeatureMatrix, rows=None) -> StandardizationParams:
    rows = np.arange(matrix.shape[0]) if rows is None else np.asarray(rows)
    s = Standardizer().fit(matrix.values[rows])
    return StandardizationParams(s.mean_, s.scale_, tuple(int(r) for r in rows))


def standardize(matrix: FeatureMatrix, params: StandardizationParams | None = None, fit_rows=None) -> FeatureMatrix:
    """Standardize with given params, or fit them on ``fit_rows`` (all rows if omitted)."""
    if params is None:
        params = fit_standardization(matrix, fit_rows)
    return matrix.with_values(Standardizer.from_params(params).transform(matrix.values))
