"""End-to-end screening pipeline and its artifact bundle."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PipelineConfig, get_phase
from .evaluate import (
    cross_validate,
    evaluate_predictions,
    roc_to_csv,
    stratified_holdout_split,
    stratified_kfold,
)
from .exceptions import AtRiskError, ConfigError, DataError, PrivacyError
from .featsel import forest_importance, rank_by_correlation, select_top_k
from .ingest import (
    RosterSchema,
    StudentRecord,
    derive_at_risk_labels,
    filter_consent,
    load_schema,
    parse_roster,
    pseudonymize,
)
from .models import RandomForest, model_from_dict, model_to_dict, predict_labels, predict_scores, train
from .preprocess import FeatureEncoder, FeatureMatrix, ImputationReport, MedianModeImputer
from .report import PredictionList, build_prediction_list, comparison_tables
from .resample import resample

logger = logging.getLogger(__name__)

SCREENING_FORMAT_VERSION = 1


@dataclass
class PreparedData:
    records: list[StudentRecord]
    labels: np.ndarray
    matrix: FeatureMatrix
    encoder: FeatureEncoder
    imputer: MedianModeImputer
    imputation: ImputationReport
    identifiers: frozenset[str]
    schema: RosterSchema | None = None


def raw_identifiers(records: Sequence[StudentRecord]) -> frozenset[str]:
    out = set()
    for r in records:
        if not r.pseudonymized:
            out.add(r.student_id)
        for v in (r.name, r.email):
            if v:
                out.add(v)
    return frozenset(out)


def restrict_to_phase(records, schema: RosterSchema | None, phase_end_week: int):
    """Drop features not yet observable by ``phase_end_week``.

    Features missing from the schema are treated as available from week 1.
    """
    if schema is None:
        raise ConfigError("phase-restricted training needs a schema sidecar with availability weeks")

    def ok(name):
        spec = schema.get(name)
        return spec is None or spec.available_from_week <= phase_end_week

    return [replace(r, features={k: v for k, v in r.features.items() if ok(k)}) for r in records]


def prepare_dataset(config: PipelineConfig, key: bytes, records: Sequence[StudentRecord] | None = None,
                    schema: RosterSchema | None = None) -> PreparedData:
    """Ingest, label, encode and impute. ``records`` bypasses roster parsing."""
    if schema is None and config.schema:
        schema = load_schema(config.schema)
    if records is None:
        if not config.roster:
            raise ConfigError("no roster path configured")
        records = parse_roster(config.roster, schema)
    identifiers = raw_identifiers(records)
    kept = pseudonymize(filter_consent(records), key)
    if not kept:
        raise DataError("no consenting records to analyse")
    labels = derive_at_risk_labels(kept, config.risk_rule).labels
    if config.phase is not None:
        kept = restrict_to_phase(kept, schema, get_phase(config.phase, config.phases).end)
    encoder = FeatureEncoder(schema).fit(kept)
    raw = encoder.transform(kept)
    imputer = MedianModeImputer().fit(raw)
    matrix = imputer.transform(raw)
    return PreparedData(kept, labels, matrix, encoder, imputer, imputer.report_, identifiers, schema)


def rank_features(data: PreparedData, config: PipelineConfig):
    corr = rank_by_correlation(data.matrix, data.labels)
    forest = forest_importance(data.matrix, data.labels,
                               RandomForest(n_trees=config.importance_trees, random_state=config.seed))
    chosen = corr if config.selection == "correlation" else forest
    return corr, forest, select_top_k(chosen, min(config.k_features, len(chosen)))


@dataclass
class ScreeningModel:
    """A trained classifier plus the encoding/imputation it expects.

    Applies to raw (pseudonymized) records: encode the selected features,
    fill missing cells with the training fill values, score.
    """

    features: tuple[str, ...]
    encoder: FeatureEncoder
    imputer: MedianModeImputer
    estimator: object
    model_id: str
    threshold: float = 0.5
    availability: dict = field(default_factory=dict)  # feature -> first observable week

    @classmethod
    def from_parts(cls, data: PreparedData, features, estimator, model_id, threshold=0.5):
        enc = FeatureEncoder(data.encoder.schema)
        enc.features_ = tuple(features)
        enc.kinds_ = {f: data.encoder.kinds_[f] for f in features}
        enc.levels_ = {f: data.encoder.levels_[f] for f in features if f in data.encoder.levels_}
        enc.tags_ = {f: data.encoder.tags_[f] for f in features}
        sel = data.matrix.select_features(features)
        enc.columns_ = sel.columns
        index = [data.matrix.names.index(c.name) for c in sel.columns]
        imp = MedianModeImputer()
        imp.fill_values_ = data.imputer.fill_values_[index]
        imp.strategies_ = tuple(data.imputer.strategies_[j] for j in index)
        imp.columns_ = sel.columns
        avail = {}
        if data.schema is not None:
            for f in features:
                spec = data.schema.get(f)
                avail[f] = spec.available_from_week if spec is not None else 1
        return cls(tuple(features), enc, imp, estimator, model_id, threshold, avail)

    def matrix(self, records) -> FeatureMatrix:
        for i, r in enumerate(records):
            absent = [f for f in self.features if f not in r.features]
            if absent:
                raise DataError(f"feature mismatch: record {i} lacks model feature(s) {absent}")
        return self.imputer.transform(self.encoder.transform(records))

    def score(self, records) -> np.ndarray:
        if not records:
            return np.empty(0)
        return predict_scores(self.estimator, self.matrix(records))

    def to_dict(self) -> dict:
        return {
            "format_version": SCREENING_FORMAT_VERSION,
            "model_id": self.model_id,
            "threshold": self.threshold,
            "features": list(self.features),
            "availability": dict(self.availability),
            "encoder": {
                "kinds": dict(self.encoder.kinds_),
                "levels": {k: list(v) for k, v in self.encoder.levels_.items()},
                "tags": dict(self.encoder.tags_),
            },
            "imputer": {"fill": self.imputer.fill_values_.tolist(), "strategy": list(self.imputer.strategies_)},
            "estimator": model_to_dict(self.estimator),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScreeningModel":
        if d.get("format_version") != SCREENING_FORMAT_VERSION:
            raise ConfigError(f"unsupported screening model version {d.get('format_version')!r}")
        from .preprocess import ColumnMeta

        feats = tuple(d["features"])
        enc = FeatureEncoder()
        enc.features_ = feats
        enc.kinds_ = dict(d["encoder"]["kinds"])
        enc.levels_ = {k: tuple(v) for k, v in d["encoder"]["levels"].items()}
        enc.tags_ = dict(d["encoder"]["tags"])
        cols = []
        for f in feats:
            if enc.kinds_[f] == "categorical":
                cols.extend(ColumnMeta(f"{f}={lv}", f, "categorical", enc.tags_[f], lv) for lv in enc.levels_[f])
            else:
                cols.append(ColumnMeta(f, f, enc.kinds_[f], enc.tags_[f]))
        enc.columns_ = tuple(cols)
        imp = MedianModeImputer()
        imp.fill_values_ = np.array(d["imputer"]["fill"], dtype=float)
        imp.strategies_ = tuple(d["imputer"]["strategy"])
        imp.columns_ = enc.columns_
        return cls(feats, enc, imp, model_from_dict(d["estimator"]), d["model_id"], d["threshold"],
                   dict(d.get("availability", {})))

    def save(self, path) -> None:
        Path(path).write_text(_json(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScreeningModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load screening model {path}: {exc}") from None


def phase_predictions(model: ScreeningModel, records: Sequence[StudentRecord], phase_name: str, *,
                      phases=None, key: bytes | None = None, threshold: float | None = None,
                      generated_at: str = "") -> tuple[PredictionList, PredictionList]:
    """Score a phase roster; returns (full list, at-risk-only list).

    Records must not carry names or e-mails. Raw ids are pseudonymized with
    ``key``; without a key they must already be tokens.
    """
    from .config import DEFAULT_PHASES

    phase = get_phase(phase_name, phases or DEFAULT_PHASES)
    if any(r.name or r.email for r in records):
        raise PrivacyError("phase roster carries name/email values; strip direct identifiers before prediction")
    if any(not r.pseudonymized for r in records):
        if not key:
            raise PrivacyError("phase roster holds raw student ids and no pseudonymization key was given")
        records = pseudonymize(records, key)
    late = [f for f in model.features if model.availability.get(f, 1) > phase.end]
    if late:
        raise DataError(f"feature mismatch: model uses {late}, not available until after {phase.name}")
    threshold = model.threshold if threshold is None else threshold
    scores = model.score(list(records))
    full = build_prediction_list([r.student_id for r in records], scores, threshold, phase.name,
                                 model.model_id, generated_at)
    return full, full.at_risk()


def _boundary_pattern(identifier: str) -> re.Pattern:
    return re.compile(r"(?<![0-9A-Za-z])" + re.escape(identifier) + r"(?![0-9A-Za-z])", re.IGNORECASE)


def scan_for_identifiers(root, identifiers) -> list[tuple[str, str]]:
    """Every (relative file, identifier) where a raw identifier occurs as a
    whole token in an output file."""
    root = Path(root)
    patterns = [(i, _boundary_pattern(i)) for i in sorted(identifiers) if i]
    hits = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        text = path.read_text(encoding="utf-8", errors="replace")
        for ident, pat in patterns:
            if pat.search(text):
                hits.append((str(path.relative_to(root)), ident))
    return hits


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


@dataclass
class Bundle:
    path: Path
    manifest: dict
    reports: dict  # mode -> kind -> EvaluationReport
    cv: dict  # mode -> kind -> CVResult
    tables: dict  # mode -> ComparisonTable
    selected: tuple[str, ...] = ()


def _holdout_partitions(X, y, mode, config):
    """(train X, train y, test X, test y, provenance batch) for one resampling mode."""
    rcfg = config.resampler(mode)
    if config.resample_before_split and mode != "none":
        Xa, ya, batch = resample(X, y, rcfg)
        tr, te = stratified_holdout_split(ya, config.test_fraction, config.seed)
        return Xa[tr], ya[tr], Xa[te], ya[te], batch
    tr, te = stratified_holdout_split(y, config.test_fraction, config.seed)
    Xt, yt, batch = resample(X[tr], y[tr], rcfg)
    return Xt, yt, X[te], y[te], batch.remap(tr) if len(batch) else batch


def run_pipeline(config: PipelineConfig, key: bytes, out_dir=None, *, records=None, schema=None) -> Bundle:
    """Ingest -> preprocess -> select -> split -> resample -> train -> evaluate,
    writing every artifact plus a hashed manifest into ``out_dir``.

    Output is written to a scratch directory and moved into place only once
    every stage and the privacy scan succeed.
    """
    out_dir = Path(out_dir or config.out_dir or "bundle")
    stage = "ingest"
    files: dict[str, str] = {}
    try:
        data = prepare_dataset(config, key, records, schema)
        stage = "features"
        corr, forest, subset = rank_features(data, config)
        X = data.matrix.select_features(subset.features)
        names = X.names
        Xv, y = X.values, data.labels
        files["config.json"] = _json(config.describe())
        files["imputation_report.csv"] = data.imputation.to_text()
        files["ranking_correlation.csv"] = corr.to_csv()
        files["ranking_forest_importance.csv"] = forest.to_csv()
        files["selected_features.csv"] = "rank,feature,score,method\n" + "".join(
            f"{i},{f},{s:.12g},{subset.method}\n" for i, (f, s) in enumerate(zip(subset.features, subset.scores), 1)
        )
        files["dataset_summary.json"] = _json({
            "n_students": int(y.size), "at_risk": int(y.sum()), "not_at_risk": int(y.size - y.sum()),
            "n_columns": len(names), "columns": names, "phase": config.phase,
        })

        reports: dict = {}
        cvs: dict = {}
        plans = [stratified_kfold(y, config.cv_k, config.seed + r) for r in range(config.cv_repeats)]
        for mode in config.resamplers:
            stage = f"evaluate[{mode}]"
            Xt, yt, Xs, ys, batch = _holdout_partitions(Xv, y, mode, config)
            if mode != "none":
                files[f"provenance/{mode}.csv"] = batch.to_csv()
            reports[mode], cvs[mode] = {}, {}
            for spec in config.models:
                model = train(spec, FeatureMatrix(Xt, X.columns), yt)
                scores = predict_scores(model, FeatureMatrix(Xs, X.columns))
                labels = predict_labels(model, FeatureMatrix(Xs, X.columns), config.threshold)
                rep = evaluate_predictions(ys, scores, config.threshold, labels)
                reports[mode][spec.kind] = rep
                files[f"reports/{mode}/{spec.kind}.txt"] = rep.to_table()
                if rep.roc is not None:
                    files[f"roc/{mode}/{spec.kind}.csv"] = roc_to_csv(rep.roc)
                screening = ScreeningModel.from_parts(data, subset.features, model, f"{spec.kind}-{mode}",
                                                      config.threshold)
                files[f"models/{mode}/{spec.kind}.json"] = _json(screening.to_dict())
                stage = f"crossval[{mode}/{spec.kind}]"
                cv = cross_validate(spec, Xv, y, plans, config.resampler(mode), config.threshold,
                                    config.resample_before_split)
                cvs[mode][spec.kind] = cv
                files[f"cv/{mode}/{spec.kind}.csv"] = cv.to_csv()
                stage = f"evaluate[{mode}]"
        stage = "report"
        extra = {m: {k: {"cv_accuracy_mean": c.summary["accuracy"][0], "cv_accuracy_std": c.summary["accuracy"][1]}
                     for k, c in cvs[m].items()} for m in cvs}
        tables = comparison_tables(reports, extra)
        for mode, t in tables.items():
            files[f"comparison_{mode}.csv"] = t.to_csv()
        files["summary.md"] = "\n".join(t.to_markdown() for t in tables.values())
    except AtRiskError as exc:
        exc.args = (f"[{stage}] {exc.args[0] if exc.args else exc}",)
        raise

    manifest = {"files": {name: hashlib.sha256(body.encode("utf-8")).hexdigest() for name, body in sorted(files.items())}}
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        for name, body in files.items():
            p = tmp / name
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(body, encoding="utf-8")
        (tmp / "manifest.json").write_text(_json(manifest), encoding="utf-8")
        hits = scan_for_identifiers(tmp, data.identifiers)
        if hits:
            raise PrivacyError(f"[privacy] raw identifiers found in {len(hits)} artifact location(s), e.g. {hits[0][0]}")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    logger.info("wrote %d artifacts to %s", len(files) + 1, out_dir)
    return Bundle(out_dir, manifest, reports, cvs, tables, subset.features)
