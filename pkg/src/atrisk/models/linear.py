"""Logistic regression and linear SVM trained by full-batch (sub)gradient descent."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_loss_gradient(w, b, X, y, l2=0.0):
    """Mean cross-entropy plus (l2/2)|w|^2, and its gradient in (w, b)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    z = X @ w + b
    # log(1 + e^z) - y z, written to avoid overflow
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = sigmoid(z) - y
    n = X.shape[0]
    grad_w = X.T @ r / n + l2 * w
    grad_b = r.sum() / n
    return float(loss), grad_w, float(grad_b)


def hinge_subgradient(w, b, X, y, l2=0.0):
    """Mean hinge loss plus (l2/2)|w|^2 with a subgradient; ``y`` in {-1, +1}.

    Samples with margin exactly 1 are treated as inactive.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    margin = y * (X @ w + b)
    active = margin < 1.0
    n = X.shape[0]
    loss = np.maximum(0.0, 1.0 - margin).mean() + 0.5 * l2 * (w @ w)
    grad_w = -(X[active].T @ y[active]) / n + l2 * w
    grad_b = -y[active].sum() / n
    return float(loss), grad_w, float(grad_b)


class LogisticRegression(BinaryClassifier):
    uses_standardization = True

    def __init__(self, step=0.1, epochs=500, l2=1e-4, standardize=True):
        self.step = step
        self.epochs = epochs
        self.l2 = l2
        self.standardize = standardize

    def _fit(self, X, y):
        w = np.zeros(X.shape[1])
        b = 0.0
        losses = []
        for _ in range(self.epochs):
            loss, gw, gb = logreg_loss_gradient(w, b, X, y, self.l2)
            losses.append(loss)
            w = w - self.step * gw
            b = b - self.step * gb
        self.coef_ = w
        self.intercept_ = b
        self.loss_curve_ = np.array(losses)

    def _scores(self, X):
        return sigmoid(X @ self.coef_ + self.intercept_)

    def _get_state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _set_state(self, state):
        self.coef_ = np.array(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])


class LinearSVM(BinaryClassifier):
    """Hinge-loss linear classifier. The score is sigmoid(margin), a monotone
    stand-in for a probability that is adequate for ROC analysis."""

    uses_standardization = True

    def __init__(self, step=0.01, epochs=1000, l2=1e-3, standardize=True):
        self.step = step
        self.epochs = epochs
        self.l2 = l2
        self.standardize = standardize

    def _fit(self, X, y):
        ys = np.where(y == 1, 1.0, -1.0)
        w = np.zeros(X.shape[1])
        b = 0.0
        losses = []
        for _ in range(self.epochs):
            loss, gw, gb = hinge_subgradient(w, b, X, ys, self.l2)
            losses.append(loss)
            w = w - self.step * gw
            b = b - self.step * gb
        self.coef_ = w
        self.intercept_ = b
        self.loss_curve_ = np.array(losses)

    def margin(self, X):
        return self._check_X(X) @ self.coef_ + self.intercept_

    def _scores(self, X):
        return sigmoid(X @ self.coef_ + self.intercept_)

    def _get_state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _set_state(self, state):
        self.coef_ = np.array(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])
