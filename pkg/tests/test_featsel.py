import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from atrisk.exceptions import DataError
from atrisk.featsel import (
    FeatureRanking,
    TopKSelector,
    forest_importance,
    point_biserial_correlation,
    rank_by_correlation,
    select_top_k,
)
from atrisk.models import RandomForest
from atrisk.preprocess import encode_features, impute_missing


def pearson_oracle(x, y):
    """Exact rational covariance; only the final square root is rounded."""
    xs = [Fraction(float(v)) for v in x]
    ys = [Fraction(float(v)) for v in y]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = sum((a - mx) ** 2 for a in xs)
    syy = sum((b - my) ** 2 for b in ys)
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(math.sqrt(r2), sxy)


def test_point_biserial_example():
    r = point_biserial_correlation([1, 2, 3, 4], [0, 0, 1, 1])
    assert r.score == pytest.approx(0.894427190999916, abs=1e-12)
    assert r.score == pytest.approx(pearson_oracle([1, 2, 3, 4], [0, 0, 1, 1]), abs=1e-15)
    assert not r.degenerate


def test_self_correlation_is_one():
    y = [0, 1, 1, 0, 1]
    assert point_biserial_correlation(y, y).score == 1.0


def test_constant_column_degenerate():
    assert point_biserial_correlation([3, 3, 3], [0, 1, 1]) == (0.0, True)
    assert point_biserial_correlation([1, 2, 3], [1, 1, 1]) == (0.0, True)


_col = arrays(np.float64, 20, elements=st.floats(-1e3, 1e3, allow_subnormal=False))
_lab = arrays(np.int64, 20, elements=st.integers(0, 1))


@settings(max_examples=200, deadline=None)
@given(_col, _lab)
def test_matches_exact_pearson(x, y):
    assume(np.ptp(x) > 1e-3 and 0 < y.sum() < y.size)
    assert abs(point_biserial_correlation(x, y).score - pearson_oracle(x, y)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(_col, _lab, st.floats(0.01, 100), st.floats(-100, 100))
def test_affine_invariance_and_sign_flip(x, y, a, b):
    assume(np.ptp(x) > 1e-3 and 0 < y.sum() < y.size)
    r = point_biserial_correlation(x, y).score
    assert abs(point_biserial_correlation(a * x + b, y).score - r) < 1e-9
    assert abs(point_biserial_correlation(-x, y).score + r) < 1e-12


def test_rank_orders_by_abs_r():
    rng = np.random.default_rng(1)
    y = np.r_[np.zeros(50), np.ones(50)]
    strong = y + rng.normal(0, 0.3, 100)
    weak = y + rng.normal(0, 3.0, 100)
    X = np.column_stack([weak, -strong])
    rk = rank_by_correlation(X, y)
    assert rk.names == ["x1", "x0"]
    assert abs(rk.entries[0][1]) > abs(rk.entries[1][1])


def test_equal_abs_r_alphabetical():
    y = np.array([0, 0, 1, 1])
    x = np.array([1.0, 2.0, 3.0, 4.0])
    rk = rank_by_correlation(np.column_stack([x, -x]), y)
    assert rk.names == ["x0", "x1"]


def test_single_column_and_degenerate_last():
    y = np.array([0, 1, 0, 1])
    assert len(rank_by_correlation(np.array([[1.0], [2.0], [2.0], [5.0]]), y)) == 1
    rk = rank_by_correlation(np.column_stack([np.ones(4), [1.0, 2.0, 2.0, 5.0]]), y)
    assert rk.names == ["x1", "x0"] and rk.degenerate == {"x0"}
    with pytest.raises(DataError):
        rank_by_correlation(np.ones((4, 2)), y)


def test_one_hot_feature_ranked_by_strongest_level(records, synthetic):
    m, _ = impute_missing(encode_features(records, synthetic.schema))
    y = np.array([int(r.letter_grade in ("D+", "D", "D-", "F", "WU") and r.repeated_course) for r in records])
    rk = rank_by_correlation(m, y)
    assert set(rk.names) == set(m.feature_names)
    groups = m.groups()
    j = groups["Program Action"]
    best = max((point_biserial_correlation(m.values[:, c], y).score for c in j), key=abs)
    assert dict(rk.entries)["Program Action"] == best
    lines = rk.to_csv().splitlines()
    assert lines[0] == "rank,feature,score,method" and lines[1].startswith("1,")


def test_copied_label_dominates_importance():
    rng = np.random.default_rng(7)
    y = rng.integers(0, 2, 150)
    X = rng.normal(size=(150, 6))
    X[:, 3] = y
    rk = forest_importance(X, y, RandomForest(n_trees=30, random_state=0))
    assert rk.names[0] == "x3"
    assert sum(s for _, s in rk.entries) == pytest.approx(1.0, abs=1e-9)


def test_noise_importances_near_uniform():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(300, 25))
    y = rng.integers(0, 2, 300)
    rk = forest_importance(X, y, RandomForest(n_trees=50, random_state=3))
    share = 1 / 25
    assert max(abs(s - share) for _, s in rk.entries) < 3 * share
    assert sum(s for _, s in rk.entries) == pytest.approx(1.0, abs=1e-9)


def test_importance_single_class_rejected():
    with pytest.raises(DataError):
        forest_importance(np.ones((5, 2)), np.zeros(5))


def test_importance_deterministic_and_permutation_equivariant():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 5))
    y = (X[:, 0] + 0.5 * X[:, 2] + rng.normal(0, 0.5, 80) > 0).astype(int)
    # all features per split and shallow trees: no near-tied splits, so the
    # feature-index tie rule never fires and the map is exactly equivariant
    f = lambda: RandomForest(n_trees=20, max_features=None, max_depth=2, random_state=9)  # noqa: E731
    a = forest_importance(X, y, f())
    assert a == forest_importance(X, y, f())
    perm = [3, 0, 4, 1, 2]
    b = dict(forest_importance(X[:, perm], y, f()).entries)
    for new, old in enumerate(perm):
        assert b[f"x{new}"] == pytest.approx(dict(a.entries)[f"x{old}"], abs=1e-12)


def test_select_top_k():
    rk = FeatureRanking(tuple((f"f{i:02d}", 1 - i / 31) for i in range(31)), "correlation")
    sub = select_top_k(rk, 10)
    assert sub.features == tuple(f"f{i:02d}" for i in range(10))
    assert sub.method == "correlation" and len(sub.scores) == 10
    assert select_top_k(rk, 31).features == tuple(rk.names)
    for bad in (0, 32):
        with pytest.raises(DataError):
            select_top_k(rk, bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.data())
def test_prefix_monotone(n, data):
    k = data.draw(st.integers(1, n - 1))
    rk = FeatureRanking(tuple((f"f{i}", float(n - i)) for i in range(n)), "forest_importance")
    assert set(select_top_k(rk, k).features) <= set(select_top_k(rk, k + 1).features)


def test_top_k_selector_transformer(records, synthetic):
    m, _ = impute_missing(encode_features(records, synthetic.schema))
    y = np.array([int(r.letter_grade in ("D+", "D", "D-", "F", "WU") and bool(r.repeated_course)) for r in records])
    sel = TopKSelector(k=10).fit(m, y)
    out = sel.transform(m)
    assert out.feature_names == list(sel.get_feature_names_out())
    assert len(out.feature_names) == 10
    assert sel.get_params() == {"k": 10, "method": "correlation", "random_state": 0}
