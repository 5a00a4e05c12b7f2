"""CART decision tree (Gini) and a bagged random forest."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .base import BinaryClassifier

# Weighted-impurity decreases closer than this are treated as equal, so
# ties resolve by feature index and threshold instead of rounding noise.
TIE_TOL = 1e-12


def gini_impurity(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total == 0:
        raise ValueError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.sum(p * p))


class Split(NamedTuple):
    feature: int
    threshold: float
    decrease: float


def _binary_gini(pos, n):
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def best_axis_split(X, y, feature_candidates=None):
    """Exhaustive search for the Gini-best axis-aligned split.

    Thresholds are midpoints between consecutive distinct values; rows with
    ``x <= threshold`` go left. Returns ``None`` for pure or single-row nodes
    and when no candidate feature takes two distinct values. A zero decrease
    is still a valid split (needed to separate XOR-like layouts).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = y.size
    if n < 2:
        return None
    total_pos = int(y.sum())
    if total_pos in (0, n):
        return None
    parent = _binary_gini(total_pos, n)
    if feature_candidates is None:
        feature_candidates = range(X.shape[1])
    best = None
    for f in sorted(int(c) for c in feature_candidates):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(y[order])
        cut = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # left size at each boundary
        if cut.size == 0:
            continue
        left_pos = cum[cut - 1]
        right_pos = total_pos - left_pos
        weighted = (cut * _binary_gini(left_pos, cut) + (n - cut) * _binary_gini(right_pos, n - cut)) / n
        dec = parent - weighted
        i = int(np.argmax(dec >= dec.max() - TIE_TOL))  # lowest threshold among near-ties
        if best is not None and dec[i] <= best.decrease + TIE_TOL:
            continue
        lo, hi = xs[cut[i] - 1], xs[cut[i]]
        thr = (lo + hi) / 2.0
        if not lo <= thr < hi:
            thr = lo
        best = Split(f, float(thr), float(dec[i]))
    return best


def bootstrap_indices(n, seed=None):
    """n draws with replacement from range(n)."""
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.integers(0, n, size=n)


def _resolve_max_features(max_features, d):
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return max(1, min(int(max_features), d))


class DecisionTree(BinaryClassifier):
    """Binary CART tree. Leaves score the at-risk fraction of their training rows."""

    def __init__(self, max_depth=None, min_samples_split=2, max_features=None, random_state=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.random_state = random_state

    def _fit(self, X, y):
        rng = self.random_state if isinstance(self.random_state, np.random.Generator) else np.random.default_rng(self.random_state)
        d = X.shape[1]
        m = _resolve_max_features(self.max_features, d)
        feature, threshold, left, right, value, count = [], [], [], [], [], []
        importance = np.zeros(d)
        n_total = y.size

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()))
            count.append(int(idx.size))
            return len(feature) - 1

        root = new_node(np.arange(y.size))
        stack = [(root, np.arange(y.size), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if idx.size < self.min_samples_split or (self.max_depth is not None and depth >= self.max_depth):
                continue
            Xn, yn = X[idx], y[idx]
            if m < d:
                cand = rng.choice(d, size=m, replace=False)
                split = best_axis_split(Xn, yn, cand)
                if split is None:
                    rest = np.setdiff1d(np.arange(d), cand)
                    split = best_axis_split(Xn, yn, rest) if rest.size else None
            else:
                split = best_axis_split(Xn, yn)
            if split is None:
                continue
            importance[split.feature] += idx.size / n_total * split.decrease
            go_left = Xn[:, split.feature] <= split.threshold
            feature[node] = split.feature
            threshold[node] = split.threshold
            li, ri = idx[go_left], idx[~go_left]
            left[node] = new_node(li)
            right[node] = new_node(ri)
            # right pushed first so the left subtree is expanded first
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=float)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value, dtype=float)
        self.node_count_ = np.array(count, dtype=np.int64)
        self.raw_importances_ = importance
        total = importance.sum()
        self.feature_importances_ = importance / total if total > 0 else np.full(d, 1.0 / d)

    def apply(self, X):
        """Leaf index reached by each row (X already validated/scaled)."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature_[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, self.feature_[cur]] <= self.threshold_[cur]
            node[rows] = np.where(go_left, self.left_[cur], self.right_[cur])
            active = self.feature_[node] >= 0
        return node

    def _scores(self, X):
        return self.value_[self.apply(X)]

    @property
    def depth(self):
        depth = np.zeros(self.feature_.size, dtype=np.int64)
        for i in range(self.feature_.size):
            if self.feature_[i] >= 0:
                depth[self.left_[i]] = depth[self.right_[i]] = depth[i] + 1
        return int(depth.max())

    def _get_state(self):
        return {
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
            "count": self.node_count_.tolist(),
            "importance": self.raw_importances_.tolist(),
        }

    def _set_state(self, state):
        self.feature_ = np.array(state["feature"], dtype=np.int64)
        self.threshold_ = np.array(state["threshold"], dtype=float)
        self.left_ = np.array(state["left"], dtype=np.int64)
        self.right_ = np.array(state["right"], dtype=np.int64)
        self.value_ = np.array(state["value"], dtype=float)
        self.node_count_ = np.array(state["count"], dtype=np.int64)
        self.raw_importances_ = np.array(state["importance"], dtype=float)
        total = self.raw_importances_.sum()
        d = self.n_features_in_
        self.feature_importances_ = self.raw_importances_ / total if total > 0 else np.full(d, 1.0 / d)


class RandomForest(BinaryClassifier):
    """Bagged CART trees with per-split feature subsampling.

    The score is the fraction of trees voting at-risk, so it takes values
    in {0, 1/T, ..., 1}. Tree ``t`` draws from its own stream seeded by
    ``(random_state, t)``, independent of build order.
    """

    def __init__(self, n_trees=100, bootstrap=True, max_features="sqrt", max_depth=None,
                 min_samples_split=2, random_state=0):
        self.n_trees = n_trees
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.random_state = random_state

    def _tree_rng(self, t):
        seed = 0 if self.random_state is None else int(self.random_state)
        return np.random.default_rng(np.random.SeedSequence([seed, t]))

    def _fit(self, X, y):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        n, d = X.shape
        trees = []
        importance = np.zeros(d)
        for t in range(self.n_trees):
            rng = self._tree_rng(t)
            idx = bootstrap_indices(n, rng) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.max_depth, self.min_samples_split, self.max_features, rng)
            tree.scaler_ = None
            tree.classes_ = np.array([0, 1])
            tree.n_features_in_ = d
            tree._fit(X[idx], y[idx])
            trees.append(tree)
            importance += tree.raw_importances_
        self.estimators_ = trees
        self.raw_importances_ = importance
        total = importance.sum()
        self.feature_importances_ = importance / total if total > 0 else np.full(d, 1.0 / d)

    def _scores(self, X):
        votes = np.zeros(X.shape[0])
        for tree in self.estimators_:
            votes += tree._scores(X) >= 0.5
        return votes / len(self.estimators_)

    def _get_state(self):
        return {"trees": [t._get_state() for t in self.estimators_]}

    def _set_state(self, state):
        trees = []
        for ts in state["trees"]:
            t = DecisionTree()
            t.set_state({"n_features_in": self.n_features_in_, **ts})
            trees.append(t)
        self.estimators_ = trees
        self.raw_importances_ = np.sum([t.raw_importances_ for t in trees], axis=0)
        total = self.raw_importances_.sum()
        d = self.n_features_in_
        self.feature_importances_ = self.raw_importances_ / total if total > 0 else np.full(d, 1.0 / d)
