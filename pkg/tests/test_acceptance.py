"""Acceptance suite. Each test prints one ``criterion N: PASS|FAIL`` line."""

import itertools
import math
import re
import warnings
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from atrisk.config import PipelineConfig
from atrisk.evaluate import (
    ConfusionMatrix,
    classification_metrics,
    fit_and_evaluate,
    roc_auc,
    stratified_holdout_split,
    stratified_kfold,
)
from atrisk.exceptions import AtRiskWarning, DataError
from atrisk.ingest import parse_roster, write_records
from atrisk.models import DEFAULT_MODELS, DecisionTree, KNearestNeighbors, ModelSpec, logreg_loss_gradient, train
from atrisk.pipeline import ScreeningModel, phase_predictions, prepare_dataset, rank_features, run_pipeline
from atrisk.report import misprediction_rate
from atrisk.resample import ResamplerConfig, resample
from atrisk.syndata import HIGH_SEPARATION, GeneratorConfig, generate_roster
from conftest import KEY
from oracles import (
    brute_knn_scores,
    brute_tree,
    brute_tree_score,
    formula_metrics,
    mann_whitney_auc,
    zscore_columns,
)


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n} ({title}): {'PASS' if ok else 'FAIL'}" + (f"  [{detail}]" if detail else ""))
        assert ok, detail

    return emit


def fast_config(**kw):
    models = tuple(ModelSpec(k, {"n_trees": 20} if k == "rforest" else {}, 0) for k in DEFAULT_MODELS)
    return PipelineConfig(**{"seed": 0, "importance_trees": 30, "cv_k": 5, "models": models, **kw})


def imbalanced_21_98(seed, d=4):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (98, d)), rng.normal(1.2, 1, (21, d))])
    return X, np.r_[np.zeros(98, int), np.ones(21, int)]


def segment_residual(s, a, b):
    d = b - a
    dd = float(d @ d)
    lam = 0.0 if dd == 0 else min(max(float((s - a) @ d) / dd, 0.0), 1.0)
    return float(np.linalg.norm(s - (a + lam * d)))


def test_criterion_01_smote_196_rows(verdict):
    X, y = imbalanced_21_98(0)
    Xr, yr, batch = resample(X, y, ResamplerConfig("smote", target_ratio=1.0))
    verdict(1, "SMOTE 21/98 -> 196 rows", Xr.shape[0] == 196 and len(batch) == 77 and int(yr.sum()) == 98,
            f"rows={Xr.shape[0]}")


def test_criterion_02_segment_membership(verdict):
    total = bad = 0
    for seed in range(50):
        X, y = imbalanced_21_98(seed)
        for method in ("smote", "adasyn"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AtRiskWarning)
                _, _, batch = resample(X, y, ResamplerConfig(method, seed=seed))
            for s, a, b in zip(batch.samples, batch.seed_rows, batch.neighbor_rows):
                total += 1
                bad += not (y[a] == y[b] == 1 and segment_residual(s, X[a], X[b]) < 1e-9)
    verdict(2, "synthetics on minority segments", total > 0 and bad == 0, f"{total - bad}/{total} synthetics")


def _difficulty_oracle(X, y, k):
    """Per minority row: share of its k nearest neighbors (all rows, per-column
    std-scaled Euclidean) that are majority."""
    sd = X.std(axis=0)
    Z = X / np.where(sd == 0, 1.0, sd)
    out = []
    for i in np.nonzero(y == 1)[0]:
        d = sorted((math.fsum((Z[i] - Z[j]) ** 2), j) for j in range(len(y)) if j != i)
        out.append(sum(1 for _, j in d[:k] if y[j] == 0) / k)
    return np.array(out)


def test_criterion_03_adasyn_allocation(verdict):
    problems = []
    for seed in range(20):
        X, y = imbalanced_21_98(seed)
        cfg = ResamplerConfig("adasyn", beta=1.0, seed=seed)
        _, _, batch = resample(X, y, cfg)
        g = batch.allocation
        if abs(int(g.sum()) - 77) > 21:
            problems.append(f"seed {seed}: total {g.sum()}")
        r = _difficulty_oracle(X, y, cfg.k_neighbors)
        if not np.allclose(batch.delta / cfg.k_neighbors, r):
            problems.append(f"seed {seed}: difficulty ratios disagree with brute force")
        for i, j in itertools.permutations(range(r.size), 2):
            if r[i] > r[j] and g[i] < g[j]:
                problems.append(f"seed {seed}: order {i},{j}")
                break
    verdict(3, "ADASYN 77 +/- 21 and r-hat ordering", not problems, "; ".join(problems[:3]) or "20 seeds")


def test_criterion_04_gradient_check(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    eps = 1e-5
    for _ in range(100):
        n, d = int(rng.integers(1, 51)), int(rng.integers(1, 11))
        X, y = rng.normal(size=(n, d)), rng.integers(0, 2, n).astype(float)
        w, b, l2 = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0, 0.01))
        _, gw, gb = logreg_loss_gradient(w, b, X, y, l2)
        theta = np.r_[w, b]

        def f(t):
            return logreg_loss_gradient(t[:-1], float(t[-1]), X, y, l2)[0]

        fd = np.array([(f(theta + eps * e) - f(theta - eps * e)) / (2 * eps) for e in np.eye(d + 1)])
        rel = np.linalg.norm(np.r_[gw, gb] - fd) / max(np.linalg.norm(fd), 1e-12)
        worst = max(worst, rel)
    verdict(4, "logistic gradient vs central differences", worst < 1e-5, f"max rel err {worst:.2e}")


def test_criterion_05_metric_oracles(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        tp, fp, fn, tn = (int(v) for v in rng.integers(0, 40, 4))
        if tp + fp + fn + tn == 0:
            tn = 1
        rep = classification_metrics(ConfusionMatrix(tp, fp, fn, tn))
        ref = formula_metrics(tp, fp, fn, tn)
        got = [rep.accuracy]
        want = [ref["accuracy"]]
        for mine, theirs in ((rep.per_class["at-risk"], ref["pos"]), (rep.per_class["not at-risk"], ref["neg"]),
                             (rep.macro, ref["macro"]), (rep.weighted, ref["weighted"])):
            got += [mine.precision, mine.recall, mine.f1]
            want += list(theirs)
        worst = max(worst, max(abs(a - float(b)) for a, b in zip(got, want)))
    auc_worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))  # coarse rounding makes ties
        _, auc = roc_auc(labels, scores)
        auc_worst = max(auc_worst, abs(auc - float(mann_whitney_auc(labels.tolist(), scores.tolist()))))
    verdict(5, "metrics and AUC vs oracles", worst <= 1e-12 and auc_worst <= 1e-12,
            f"metric err {worst:.1e}, auc err {auc_worst:.1e}")


def test_criterion_06_cv_structure(verdict):
    rng = np.random.default_rng(6)
    problems = []
    for t in range(1000):
        n = int(rng.integers(20, 200))
        y = (rng.random(n) < rng.uniform(0.05, 0.5)).astype(int)
        y[:2] = (0, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AtRiskWarning)
            plan = stratified_kfold(y, 10, seed=t)
        idx = np.concatenate(plan.folds)
        pos = [int(y[f].sum()) for f in plan.folds]
        if not (np.array_equal(np.sort(idx), np.arange(n)) and max(pos) - min(pos) <= 1):
            problems.append(t)
    default = stratified_kfold(np.r_[np.zeros(98, int), np.ones(21, int)], 10, 0)
    sizes = {f.size for f in default.folds}
    verdict(6, "stratified 10-fold structure", not problems and sizes == {11, 12},
            f"bad plans {len(problems)}/1000, 119-row fold sizes {sorted(sizes)}")


def test_criterion_07_model_sanity(verdict):
    syn = generate_roster(GeneratorConfig(seed=0, separation=HIGH_SEPARATION))
    cfg = PipelineConfig(seed=0)
    data = prepare_dataset(cfg, KEY, parse_roster(syn.roster_csv.encode(), syn.schema), syn.schema)
    _, _, subset = rank_features(data, cfg)
    X, y = data.matrix.select_features(subset.features).values, data.labels
    tr, te = stratified_holdout_split(y, cfg.test_fraction, cfg.seed)
    acc = {}
    for spec in cfg.models:
        _, rep = fit_and_evaluate(spec, X[tr], y[tr], X[te], y[te])
        acc[spec.kind] = rep.accuracy
    ok = all(a >= 0.78 for a in acc.values()) and all(acc[k] >= 0.89 for k in ("dtree", "rforest", "gnb"))
    verdict(7, "holdout accuracy on high-separation data", ok, ", ".join(f"{k}={v:.3f}" for k, v in acc.items()))


def test_criterion_08_determinism(verdict, synthetic, tmp_path):
    recs = parse_roster(synthetic.roster_csv.encode(), synthetic.schema)
    a = run_pipeline(fast_config(), KEY, tmp_path / "a", records=recs, schema=synthetic.schema)
    b = run_pipeline(fast_config(), KEY, tmp_path / "b", records=recs, schema=synthetic.schema)
    same_files = all((a.path / n).read_bytes() == (b.path / n).read_bytes() for n in a.manifest["files"])
    same_manifest = (a.path / "manifest.json").read_bytes() == (b.path / "manifest.json").read_bytes()
    verdict(8, "byte-identical bundles", same_manifest and same_files and a.manifest == b.manifest,
            f"{len(a.manifest['files'])} artifacts")


def _salted_roster():
    syn = generate_roster(GeneratorConfig(seed=3, separation=2.0))
    lines = syn.roster_csv.splitlines()
    sentinels = []
    out = [lines[0]]
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if i < 50:
            sid, name, email = f"7{i:02d}31{i:02d}59", f"Sentinelfirst{i:02d} Sentinellast{i:02d}", \
                f"sentinel{i:02d}.canary@example.org"
            cells[:3] = [sid, name, email]
            sentinels += [sid, name, email]
        out.append(",".join(cells))
    return "\n".join(out) + "\n", syn.schema, sentinels


def test_criterion_09_privacy_gate(verdict, tmp_path):
    text, schema, sentinels = _salted_roster()
    (tmp_path / "roster.csv").write_text(text)
    recs = parse_roster(text.encode(), schema)
    run_pipeline(fast_config(), KEY, tmp_path / "out" / "bundle", records=recs, schema=schema)
    # phase predictions and misprediction report through their own writers
    data = prepare_dataset(fast_config(), KEY, recs, schema)
    _, _, subset = rank_features(data, fast_config())
    est = train(ModelSpec("gnb"), data.matrix.select_features(subset.features), data.labels)
    model = ScreeningModel.from_parts(data, subset.features, est, "gnb-none")
    full, flagged = phase_predictions(model, [replace(r, name=None, email=None) for r in recs], "phase3", key=KEY)
    (tmp_path / "out" / "pred_all.csv").write_text(full.to_csv())
    (tmp_path / "out" / "pred_flagged.csv").write_text(flagged.to_csv())
    (tmp_path / "out" / "mispred.txt").write_text(
        misprediction_rate(full, {s: 1 - v for s, v in full.labels().items()}).to_text())
    write_records(data.records, tmp_path / "out" / "records.csv")

    hits = []
    patterns = [re.compile(r"(?<![0-9])" + re.escape(s) + r"(?![0-9])", re.I) for s in sentinels]
    files = [p for p in (tmp_path / "out").rglob("*") if p.is_file()]
    for p in files:
        body = p.read_text(encoding="utf-8", errors="replace")
        hits += [(p.name, pat.pattern) for pat in patterns if pat.search(body)]
    verdict(9, "no sentinel identifiers in artifacts", not hits and len(sentinels) == 150,
            f"{len(files)} files scanned, {len(hits)} hits")


def test_criterion_10_misprediction_rate(verdict, synthetic):
    recs = parse_roster(synthetic.roster_csv.encode(), synthetic.schema)
    data = prepare_dataset(fast_config(), KEY, recs, synthetic.schema)
    _, _, subset = rank_features(data, fast_config())
    est = train(ModelSpec("logreg"), data.matrix.select_features(subset.features), data.labels)
    model = ScreeningModel.from_parts(data, subset.features, est, "logreg-none")
    phase = [replace(r, name=None, email=None) for r in recs[:40]]
    full, _ = phase_predictions(model, phase, "phase3", key=KEY)
    outcomes = full.labels()
    for sid in list(outcomes)[5:9]:
        outcomes[sid] = 1 - outcomes[sid]
    rep = misprediction_rate(full, outcomes)
    ok = rep.joined == 40 and rep.rate_exact == Fraction(1, 10) and "misprediction_rate: 10.0%" in rep.to_text()
    verdict(10, "4 flips in 40 -> 10.0%", ok, f"rate={rep.rate_exact}")


def test_criterion_11_tiny_scale_oracles(verdict):
    points = [(a, b, lab) for a in (0.0, 1.0) for b in (0.0, 1.0) for lab in (0, 1)]
    grid = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    rng = np.random.default_rng(11)
    checked = single = mismatches = 0
    for n in range(1, 7):
        for combo in itertools.combinations_with_replacement(points, n):
            rows = list(combo)
            X = np.array([r[:2] for r in rows])
            y = np.array([r[2] for r in rows])
            if y.min() == y.max():
                # a one-class training set is refused rather than fitted
                with pytest.raises(DataError):
                    DecisionTree().fit(X, y)
                single += 1
                continue
            ref = brute_tree(X.tolist(), y.tolist())
            expect = [float(brute_tree_score(ref, q)) for q in grid.tolist()]
            for order in (np.arange(n), rng.permutation(n)):
                model = DecisionTree().fit(X[order], y[order])
                got = model.predict_scores(grid).tolist()
                labels_ok = model.predict(grid).tolist() == [int(e >= 0.5) for e in expect]
                checked += 1
                mismatches += not (labels_ok and all(abs(g - e) <= 1e-12 for g, e in zip(got, expect)))
    tree_ok = mismatches == 0 and checked > 0

    knn_bad = 0
    for t in range(200):
        k = (1, 3)[t % 2]
        n, d = int(rng.integers(3, 25)), int(rng.integers(1, 5))
        ytr = rng.integers(0, 2, n)
        if t < 100:
            # small integer lattice, raw distances: exact ties exercise the index tie rule
            Xtr = rng.integers(0, 4, (n, d)).astype(float)
            Q = rng.integers(0, 4, (10, d)).astype(float)
            model = KNearestNeighbors(k=k, standardize=False)
            ref = brute_knn_scores(Xtr.tolist(), ytr.tolist(), Q.tolist(), k)
        else:
            # continuous data through the default standardization
            Xtr = rng.normal(0, rng.uniform(0.1, 10, d), (n, d))
            Q = rng.normal(0, 3, (10, d))
            model = KNearestNeighbors(k=k)
            ref = brute_knn_scores(zscore_columns(Xtr.tolist(), Xtr.tolist()), ytr.tolist(),
                                   zscore_columns(Xtr.tolist(), Q.tolist()), k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AtRiskWarning)
            got = model.fit(Xtr, ytr).predict_scores(Q).tolist()
        knn_bad += got != [float(v) for v in ref]
    verdict(11, "tree and KNN vs brute force", tree_ok and knn_bad == 0,
            f"tree fits {checked} ({single} one-class sets refused), tree mismatches {mismatches}, "
            f"knn mismatches {knn_bad}/200")

