"""Brute-force Euclidean neighbor search with deterministic tie-breaking."""

import numpy as np


def squared_distances(A, B):
    # Explicit differences, not the |a|^2 - 2ab + |b|^2 expansion: equal
    # geometric distances must compare equal for index tie-breaking.
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)


def k_nearest(dist, k):
    """Indices of the k smallest entries per row; ties go to the lower index."""
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def self_neighbors(X, k):
    """k nearest *other* points for each row of X."""
    d = squared_distances(X, X)
    np.fill_diagonal(d, np.inf)
    return k_nearest(d, k)
