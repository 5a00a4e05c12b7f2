"""SMOTE and ADASYN minority oversampling.

Synthetic rows are convex combinations ``x_i + lam * (x_nn - x_i)`` of a
minority seed row and one of its minority nearest neighbors. Neighbor
search runs on standardized columns (unless disabled) while interpolation
happens on the original values; the map is affine, so a sample lies on the
same segment either way.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_X_y

from ._distance import k_nearest, self_neighbors, squared_distances
from .exceptions import AtRiskWarning, ConfigError, DataError

METHODS = ("none", "smote", "adasyn")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ResamplerConfig:
    method: str = "none"
    k_neighbors: int = 5
    target_ratio: float = 1.0
    beta: float = 1.0
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown resampling method {self.method!r}; choose from {METHODS}")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ConfigError("target_ratio must lie in (0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticBatch:
    samples: np.ndarray
    seed_rows: np.ndarray
    neighbor_rows: np.ndarray
    lambdas: np.ndarray
    # ADASYN only: majority-neighbor counts and per-seed sample allocation
    delta: np.ndarray | None = None
    allocation: np.ndarray | None = None

    def __len__(self):
        return int(self.samples.shape[0])

    def remap(self, index) -> "SyntheticBatch":
        """Translate seed/neighbor row numbers through ``index``."""
        index = np.asarray(index)
        return replace(self, seed_rows=index[self.seed_rows], neighbor_rows=index[self.neighbor_rows])

    def to_csv(self, path=None) -> str:
        """Provenance dump ``sample_index,seed_row,neighbor_row,lambda``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_index", "seed_row", "neighbor_row", "lambda"])
        for i in range(len(self)):
            w.writerow([i, int(self.seed_rows[i]), int(self.neighbor_rows[i]), repr(float(self.lambdas[i]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _empty_batch(d):
    return SyntheticBatch(np.empty((0, d)), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))


def _scaled(points, scale):
    if scale is None:
        return points
    scale = np.where(np.asarray(scale, dtype=float) == 0, 1.0, scale)
    return points / scale


def nearest_minority_neighbors(points, k, scale=None):
    """k nearest other rows of ``points`` (Euclidean); ties by ascending index."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] < k + 1:
        raise DataError(f"need at least k+1={k + 1} points for {k} neighbors, got {points.shape[0]}")
    return self_neighbors(_scaled(points, scale), k)


def _interpolate(rows, seeds, neighbor_table, rng):
    k = neighbor_table.shape[1]
    nbrs = np.empty(seeds.size, dtype=np.int64)
    lams = np.empty(seeds.size)
    for j, i in enumerate(seeds):
        nbrs[j] = neighbor_table[i, rng.integers(k)]
        lams[j] = rng.random()
    samples = rows[seeds] + lams[:, None] * (rows[nbrs] - rows[seeds])
    return SyntheticBatch(samples, seeds.astype(np.int64), nbrs, lams)


def _minority_table(minority, k, scale):
    m = minority.shape[0]
    if m < 2:
        raise DataError(f"minority class too small to oversample ({m} row)")
    k_eff = min(k, m - 1)
    if k_eff < k:
        warnings.warn(f"only {m} minority rows; using k={k_eff} neighbors", AtRiskWarning, stacklevel=3)
    return nearest_minority_neighbors(minority, k_eff, scale)


def smote_oversample(minority_rows, config: ResamplerConfig, n_samples: int, scale=None) -> SyntheticBatch:
    """Generate ``n_samples`` SMOTE rows. Seeds cycle through the minority
    rows in order; each sample draws its neighbor, then its lambda."""
    minority = np.asarray(minority_rows, dtype=float)
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    table = _minority_table(minority, config.k_neighbors, scale)
    if n_samples == 0:
        return _empty_batch(minority.shape[1])
    rng = np.random.default_rng(config.seed)
    seeds = np.arange(n_samples) % minority.shape[0]
    return _interpolate(minority, seeds, table, rng)


def adasyn_allocation(delta, k, G):
    """Per-seed sample counts ``round(r_hat_i * G)`` with ``r_i = delta_i / k``.

    Returns ``(counts, fallback)``. When no minority point has a majority
    neighbor the G samples are dealt round-robin and ``fallback`` is True.
    """
    delta = np.asarray(delta, dtype=float)
    r = delta / k
    total = r.sum()
    if total == 0:
        counts = np.full(delta.size, G // delta.size, dtype=np.int64)
        counts[: G % delta.size] += 1
        return counts, True
    r_hat = r / total
    return np.floor(r_hat * G + 0.5).astype(np.int64), False


def adasyn_oversample(all_rows, labels, config: ResamplerConfig, n_samples: int | None = None, scale=None) -> SyntheticBatch:
    """ADASYN on the full training set. Seed/neighbor rows in the returned
    batch index into ``all_rows``. ``n_samples`` defaults to
    ``(m_maj - m_min) * beta``."""
    X = np.asarray(all_rows, dtype=float)
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DataError("ADASYN needs both classes present")
    minority_label = classes[np.argmin(counts)]
    min_idx = np.nonzero(y == minority_label)[0]
    m_min, m_maj = min_idx.size, y.size - min_idx.size
    if n_samples is None:
        n_samples = round_half_up((m_maj - m_min) * config.beta)
    k = config.k_neighbors
    if X.shape[0] < k + 1:
        raise DataError(f"ADASYN needs at least k+1={k + 1} rows, got {X.shape[0]}")
    Xs = _scaled(X, scale)
    d = squared_distances(Xs[min_idx], Xs)
    d[np.arange(m_min), min_idx] = np.inf
    nn_all = k_nearest(d, k)
    delta = (y[nn_all] != minority_label).sum(axis=1)
    alloc, fallback = adasyn_allocation(delta, k, n_samples)
    if fallback:
        warnings.warn("no minority row borders the majority class; ADASYN falls back to uniform allocation",
                      AtRiskWarning, stacklevel=2)
    minority = X[min_idx]
    table = _minority_table(minority, k, scale)
    if alloc.sum() == 0:
        batch = _empty_batch(X.shape[1])
    else:
        rng = np.random.default_rng(config.seed)
        seeds = np.repeat(np.arange(m_min), alloc)
        batch = _interpolate(minority, seeds, table, rng).remap(min_idx)
    return replace(batch, delta=delta, allocation=alloc)


def synthetic_count(n_minority: int, n_majority: int, config: ResamplerConfig) -> int:
    need = round_half_up(config.target_ratio * n_majority) - n_minority
    if config.method == "adasyn":
        need = round_half_up(need * config.beta)
    return max(0, need)


def resample(X, y, config: ResamplerConfig):
    """Oversample the minority class of (X, y). Returns ``(X_res, y_res, batch)``;
    original rows come first, unchanged, followed by the synthetic rows."""
    X, y = check_X_y(X, y, dtype=float)
    y = np.asarray(y).astype(np.int64)
    if config.method == "none":
        return X, y, _empty_batch(X.shape[1])
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DataError("resampling needs both classes present")
    minority_label = int(classes[np.argmin(counts)])
    min_idx = np.nonzero(y == minority_label)[0]
    G = synthetic_count(counts.min(), counts.max(), config)
    scale = X.std(axis=0) if config.standardize else None
    if config.method == "smote":
        batch = smote_oversample(X[min_idx], config, G, scale).remap(min_idx)
    else:
        batch = adasyn_oversample(X, y, config, G, scale)
    X_res = np.vstack([X, batch.samples])
    y_res = np.concatenate([y, np.full(len(batch), minority_label, dtype=np.int64)])
    return X_res, y_res, batch


class _Oversampler(BaseEstimator):
    method = "none"

    def __init__(self, k_neighbors=5, target_ratio=1.0, beta=1.0, random_state=0, standardize=True):
        self.k_neighbors = k_neighbors
        self.target_ratio = target_ratio
        self.beta = beta
        self.random_state = random_state
        self.standardize = standardize

    def config(self) -> ResamplerConfig:
        return ResamplerConfig(self.method, self.k_neighbors, self.target_ratio, self.beta,
                               self.random_state, self.standardize)

    def fit_resample(self, X, y):
        X_res, y_res, self.batch_ = resample(X, y, self.config())
        return X_res, y_res


class SMOTE(_Oversampler):
    method = "smote"


class ADASYN(_Oversampler):
    method = "adasyn"
