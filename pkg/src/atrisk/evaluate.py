"""Stratified splitting, cross-validation and classification metrics."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AtRiskWarning, DataError
from .models import ModelSpec, predict_labels, predict_scores, train
from .resample import ResamplerConfig, resample, round_half_up

CLASS_NAMES = ("not at-risk", "at-risk")


def stratified_holdout_split(labels, test_fraction=0.2, seed=0):
    """Per class, ``round_half_up(count * test_fraction)`` rows go to test.

    Returns sorted ``(train_idx, test_idx)``.
    """
    y = np.asarray(labels).astype(np.int64)
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0, 1):
        idx = np.nonzero(y == c)[0]
        if idx.size == 0:
            raise DataError(f"class {c} has no rows; a stratified split needs both classes")
        n_test = round_half_up(idx.size * test_fraction)
        if n_test >= idx.size:
            raise DataError(f"class {c} would keep no training rows at test_fraction={test_fraction}")
        perm = rng.permutation(idx)
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[np.ndarray, ...]
    seed: int
    positives: tuple[int, ...] = ()

    @property
    def k(self):
        return len(self.folds)

    def splits(self):
        """Yield ``(train_idx, test_idx)`` per fold, in fold order."""
        all_idx = np.concatenate(self.folds)
        for f in self.folds:
            yield np.sort(np.setdiff1d(all_idx, f)), f


def stratified_kfold(labels, k=10, seed=0) -> FoldPlan:
    """Shuffle each class with one seeded generator and deal its rows
    round-robin over the folds. The deal continues across classes, so fold
    sizes never differ by more than one."""
    y = np.asarray(labels).astype(np.int64)
    if k < 2:
        raise DataError("k-fold cross-validation needs k >= 2")
    if k > y.size:
        raise DataError(f"k={k} exceeds the {y.size} available rows")
    minority = min(int((y == 0).sum()), int((y == 1).sum()))
    if k > minority:
        warnings.warn(f"k={k} exceeds the minority class count ({minority}); some folds lack positives",
                      AtRiskWarning, stacklevel=2)
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in (0, 1):
        for i in rng.permutation(np.nonzero(y == c)[0]):
            buckets[pos % k].append(int(i))
            pos += 1
    folds = tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets)
    return FoldPlan(folds, seed, tuple(int(y[f].sum()) for f in folds))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true).astype(np.int64)
    p = np.asarray(y_pred).astype(np.int64)
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    return ConfusionMatrix(
        tp=int(((t == 1) & (p == 1)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
        tn=int(((t == 0) & (p == 0)).sum()),
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    per_class: dict  # class name -> ClassMetrics
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics
    zero_division: list = field(default_factory=list)
    roc: list | None = None  # (fpr, tpr, threshold)
    auc: float | None = None

    def positive(self) -> ClassMetrics:
        return self.per_class[CLASS_NAMES[1]]

    def to_table(self) -> str:
        """Classification table: one row per class, accuracy, macro and weighted averages."""
        n = self.confusion.total
        rows = [f"{'':14s}{'Precision':>10s}{'Recall':>10s}{'F1-score':>10s}{'Support':>10s}"]
        for name in CLASS_NAMES:
            m = self.per_class[name]
            rows.append(f"{name:14s}{m.precision:10.4f}{m.recall:10.4f}{m.f1:10.4f}{m.support:10d}")
        rows.append(f"{'Accuracy':14s}{'':10s}{'':10s}{self.accuracy:10.4f}{n:10d}")
        for label, m in (("Macro Avg", self.macro), ("Weighted Avg", self.weighted)):
            rows.append(f"{label:14s}{m.precision:10.4f}{m.recall:10.4f}{m.f1:10.4f}{m.support:10d}")
        if self.auc is not None:
            rows.append(f"{'AUC':14s}{'':10s}{'':10s}{self.auc:10.4f}")
        if self.zero_division:
            rows.append("zero-division: " + ", ".join(self.zero_division))
        return "\n".join(rows) + "\n"

    def summary(self) -> dict:
        pos = self.positive()
        return {
            "accuracy": self.accuracy,
            "precision": pos.precision,
            "recall": pos.recall,
            "f1": pos.f1,
            "auc": self.auc if self.auc is not None else float("nan"),
            "macro_f1": self.macro.f1,
            "weighted_f1": self.weighted.f1,
        }


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix) -> EvaluationReport:
    """Accuracy plus per-class, macro and support-weighted precision/recall/F1.

    Any 0/0 ratio is reported as 0.0 and named in ``zero_division``.
    """
    n = cm.total
    if n == 0:
        raise DataError("cannot compute metrics on an empty confusion matrix")
    flags: list[str] = []
    # (tp, fp, fn) from each class's point of view
    views = {CLASS_NAMES[1]: (cm.tp, cm.fp, cm.fn), CLASS_NAMES[0]: (cm.tn, cm.fn, cm.fp)}
    per_class = {}
    for name in CLASS_NAMES:
        tp, fp, fn = views[name]
        p = _ratio(tp, tp + fp, f"precision[{name}]", flags)
        r = _ratio(tp, tp + fn, f"recall[{name}]", flags)
        f1 = _ratio(2 * p * r, p + r, f"f1[{name}]", flags)
        per_class[name] = ClassMetrics(p, r, f1, tp + fn)
    ms = [per_class[c] for c in CLASS_NAMES]
    macro = ClassMetrics(
        sum(m.precision for m in ms) / 2, sum(m.recall for m in ms) / 2, sum(m.f1 for m in ms) / 2, n
    )
    weighted = ClassMetrics(
        sum(m.precision * m.support for m in ms) / n,
        sum(m.recall * m.support for m in ms) / n,
        sum(m.f1 * m.support for m in ms) / n,
        n,
    )
    return EvaluationReport(cm, per_class, (cm.tp + cm.tn) / n, macro, weighted, flags)


def roc_auc(y_true, scores):
    """ROC points ``(fpr, tpr, threshold)`` swept over distinct scores in
    descending order, from ``(0, 0, inf)`` to ``(1, 1)``, and the trapezoid AUC."""
    y = np.asarray(y_true).astype(np.int64)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise DataError("labels and scores differ in length")
    P = int(y.sum())
    N = y.size - P
    if P == 0 or N == 0:
        raise DataError("ROC analysis needs both classes in y_true")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]  # final index of each tied block
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    points = [(0.0, 0.0, math.inf)]
    points += [(fp / N, tp / P, float(s[i])) for tp, fp, i in zip(tps, fps, last)]
    # integer trapezoid: sum (fp_j - fp_{j-1}) * (tp_j + tp_{j-1}) / 2, scaled once
    tp_prev = np.r_[0, tps[:-1]]
    fp_prev = np.r_[0, fps[:-1]]
    area2 = int(np.sum((fps - fp_prev) * (tps + tp_prev)))
    return points, area2 / (2 * P * N)


def roc_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fpr", "tpr", "threshold"])
    for fpr, tpr, thr in points:
        w.writerow([repr(fpr), repr(tpr), "inf" if math.isinf(thr) else repr(thr)])
    return buf.getvalue()


def evaluate_predictions(y_true, scores, threshold=0.5, labels=None) -> EvaluationReport:
    """Full report for one score vector; ``labels`` overrides thresholding."""
    y = np.asarray(y_true).astype(np.int64)
    s = np.asarray(scores, dtype=float)
    pred = (s >= threshold).astype(np.int64) if labels is None else np.asarray(labels)
    report = classification_metrics(confusion_matrix(y, pred))
    if 0 < y.sum() < y.size:
        report.roc, report.auc = roc_auc(y, s)
    return report


def fit_and_evaluate(spec: ModelSpec, X_train, y_train, X_test, y_test, resampler=None, threshold=0.5):
    """Resample the training rows, train, and evaluate on the test rows."""
    if resampler is not None and resampler.method != "none":
        X_train, y_train, _ = resample(X_train, y_train, resampler)
    y_train = np.asarray(y_train)
    if np.unique(y_train).size < 2 and spec.kind not in ("knn", "majority"):
        raise DataError("training partition holds a single class")
    model = train(spec, X_train, y_train)
    scores = predict_scores(model, X_test)
    labels = predict_labels(model, X_test, threshold)
    return model, evaluate_predictions(y_test, scores, threshold, labels)


@dataclass
class CVResult:
    reports: list
    summary: dict  # metric -> (mean, std)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", *METRICS])
        for i, r in enumerate(self.reports):
            s = r.summary()
            w.writerow([i, *[f"{s[m]:.6f}" for m in METRICS]])
        w.writerow(["mean", *[f"{self.summary[m][0]:.6f}" for m in METRICS]])
        w.writerow(["std", *[f"{self.summary[m][1]:.6f}" for m in METRICS]])
        return buf.getvalue()


METRICS = ("accuracy", "precision", "recall", "f1", "auc", "macro_f1", "weighted_f1")


def cross_validate(spec: ModelSpec, X, y, fold_plan, resampler: ResamplerConfig | None = None,
                   threshold=0.5, resample_before_split=False) -> CVResult:
    """Evaluate ``spec`` on every fold of ``fold_plan`` (or a list of plans,
    for repeated CV). Per fold: resample the training part, train (models
    that need it standardize internally on their training rows), test on
    the held-out fold. Summary is mean and population std per metric, with
    AUC averaged over folds where it is defined."""
    X = np.asarray(getattr(X, "values", X), dtype=float)
    y = np.asarray(y).astype(np.int64)
    plans = list(fold_plan) if isinstance(fold_plan, (list, tuple)) else [fold_plan]
    if resample_before_split and resampler is not None and resampler.method != "none":
        # compatibility mode: synthetic rows join the pool before folding,
        # so the plans are re-dealt over the enlarged label vector
        X, y, _ = resample(X, y, resampler)
        resampler = None
        plans = [stratified_kfold(y, p.k, p.seed) for p in plans]
    reports = []
    for plan in plans:
        for train_idx, test_idx in plan.splits():
            if np.unique(y[train_idx]).size < 2 and spec.kind not in ("knn", "majority"):
                raise DataError("a fold's training part holds a single class")
            _, rep = fit_and_evaluate(spec, X[train_idx], y[train_idx], X[test_idx], y[test_idx], resampler, threshold)
            reports.append(rep)
    summary = {}
    for m in METRICS:
        vals = np.array([r.summary()[m] for r in reports])
        vals = vals[~np.isnan(vals)]
        summary[m] = (float(vals.mean()), float(vals.std())) if vals.size else (float("nan"), float("nan"))
    return CVResult(reports, summary)
