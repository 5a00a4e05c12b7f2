from __future__ import annotations

import numpy as np

from .base import BinaryClassifier


class GaussianNaiveBayes(BinaryClassifier):
    """Gaussian NB with per-class feature means/variances and empirical priors.

    ``var_smoothing`` times the largest feature variance is added to every
    class variance so constant-within-class features stay finite.
    """

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def _fit(self, X, y):
        eps = self.var_smoothing * X.var(axis=0).max()
        eps = max(eps, 1e-12)
        self.theta_ = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.vstack([X[y == c].var(axis=0) for c in (0, 1)]) + eps
        self.class_prior_ = np.array([(y == 0).mean(), (y == 1).mean()])

    def joint_log_likelihood(self, X):
        jll = []
        for c in (0, 1):
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            jll.append(np.log(self.class_prior_[c]) + ll)
        return np.column_stack(jll)

    def _scores(self, X):
        jll = self.joint_log_likelihood(X)
        top = jll.max(axis=1, keepdims=True)
        p = np.exp(jll - top)
        p /= p.sum(axis=1, keepdims=True)
        return p[:, 1]

    def _get_state(self):
        return {"theta": self.theta_.tolist(), "var": self.var_.tolist(), "prior": self.class_prior_.tolist()}

    def _set_state(self, state):
        self.theta_ = np.array(state["theta"], dtype=float)
        self.var_ = np.array(state["var"], dtype=float)
        self.class_prior_ = np.array(state["prior"], dtype=float)
