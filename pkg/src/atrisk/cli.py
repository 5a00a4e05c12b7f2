"""Command line interface: ``atrisk <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 privacy-gate
violation. The pseudonymization key comes from ``$ATRISK_PSEUDONYM_KEY`` or
``--key-file``; it is never accepted as a command-line value.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .config import PipelineConfig, load_config
from .evaluate import cross_validate, fit_and_evaluate, roc_to_csv, stratified_holdout_split, stratified_kfold
from .exceptions import AtRiskError, ConfigError
from .ingest import filter_consent, load_key, load_schema, parse_roster, pseudonymize, write_records
from .models import ModelSpec
from .pipeline import (
    ScreeningModel,
    phase_predictions,
    prepare_dataset,
    rank_features,
    run_pipeline,
    scan_for_identifiers,
)
from .report import PredictionList, comparison_tables, misprediction_rate
from .resample import METHODS as RESAMPLERS
from .resample import resample
from .syndata import GeneratorConfig, generate_roster

logger = logging.getLogger("atrisk")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    over = {}
    for name in ("roster", "schema", "key_file"):
        v = getattr(args, name, None)
        if v:
            over[name] = str(v)
    if getattr(args, "phase_restrict", None):
        over["phase"] = args.phase_restrict
    if getattr(args, "resample_before_split", False):
        over["resample_before_split"] = True
    if getattr(args, "repeats", None):
        over["cv_repeats"] = args.repeats
    if over:
        cfg = replace(cfg, **over)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out(args, default) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_synth(args):
    cfg = GeneratorConfig(n_students=args.n_students, n_at_risk=args.n_at_risk, seed=args.seed or 0,
                          missing_rate=args.missing_rate, separation=args.separation,
                          n_nonconsenting=args.n_nonconsenting)
    paths = generate_roster(cfg).write(_out(args, "synthetic"))
    for k, p in paths.items():
        print(f"{k}: {p}")


def cmd_ingest(args):
    cfg = _config(args)
    data = prepare_dataset(cfg, load_key(cfg.key_file))
    out = _out(args, "ingested")
    from .ingest import LabelVector

    write_records(data.records, out / "records.csv", LabelVector(data.labels))
    _write(out / "imputation_report.csv", data.imputation.to_text())
    hits = scan_for_identifiers(out, data.identifiers)
    if hits:
        from .exceptions import PrivacyError

        raise PrivacyError(f"raw identifiers leaked into {hits[0][0]}")
    print(f"{len(data.records)} records ({int(data.labels.sum())} at risk) -> {out / 'records.csv'}")


def cmd_features(args):
    cfg = _config(args)
    data = prepare_dataset(cfg, load_key(cfg.key_file))
    corr, forest, subset = rank_features(data, cfg)
    out = _out(args, "features")
    _write(out / "imputation_report.csv", data.imputation.to_text())
    _write(out / "ranking_correlation.csv", corr.to_csv())
    _write(out / "ranking_forest_importance.csv", forest.to_csv())
    print(f"top {len(subset.features)} by {subset.method}: {', '.join(subset.features)}")


def _selected(cfg):
    data = prepare_dataset(cfg, load_key(cfg.key_file))
    _, _, subset = rank_features(data, cfg)
    X = data.matrix.select_features(subset.features)
    return data, subset, X


def _specs(cfg, kinds):
    if not kinds:
        return cfg.models
    by_kind = {m.kind: m for m in cfg.models}
    return tuple(by_kind.get(k) or ModelSpec(k, seed=cfg.seed) for k in kinds)


def cmd_train(args):
    cfg = _config(args)
    data, subset, X = _selected(cfg)
    out = _out(args, "models")
    Xr, yr, _ = resample(X.values, data.labels, cfg.resampler(args.resampler))
    from .models import train
    from .preprocess import FeatureMatrix

    for spec in _specs(cfg, args.model):
        est = train(spec, FeatureMatrix(Xr, X.columns), yr)
        model_id = f"{spec.kind}-{args.resampler}" + (f"-{cfg.phase}" if cfg.phase else "")
        sm = ScreeningModel.from_parts(data, subset.features, est, model_id, cfg.threshold)
        sm.save(out / f"{model_id}.json")
        print(f"saved {out / (model_id + '.json')}")


def cmd_evaluate(args):
    cfg = _config(args)
    data, subset, X = _selected(cfg)
    out = _out(args, "evaluation")
    tr, te = stratified_holdout_split(data.labels, cfg.test_fraction, cfg.seed)
    reports = {}
    for mode in (args.resampler or cfg.resamplers):
        reports[mode] = {}
        for spec in _specs(cfg, args.model):
            _, rep = fit_and_evaluate(spec, X.values[tr], data.labels[tr], X.values[te], data.labels[te],
                                      cfg.resampler(mode), cfg.threshold)
            reports[mode][spec.kind] = rep
            _write(out / "reports" / mode / f"{spec.kind}.txt", rep.to_table())
            if rep.roc is not None:
                _write(out / "roc" / mode / f"{spec.kind}.csv", roc_to_csv(rep.roc))
    for mode, table in comparison_tables(reports).items():
        _write(out / f"comparison_{mode}.csv", table.to_csv())
        print(table.to_markdown())


def cmd_crossval(args):
    cfg = _config(args)
    data, subset, X = _selected(cfg)
    out = _out(args, "crossval")
    plans = [stratified_kfold(data.labels, cfg.cv_k, cfg.seed + r) for r in range(cfg.cv_repeats)]
    for mode in (args.resampler or cfg.resamplers):
        for spec in _specs(cfg, args.model):
            cv = cross_validate(spec, X.values, data.labels, plans, cfg.resampler(mode), cfg.threshold,
                                cfg.resample_before_split)
            _write(out / mode / f"{spec.kind}.csv", cv.to_csv())
            mean, std = cv.summary["accuracy"]
            print(f"{mode:7s} {spec.kind:11s} accuracy {mean:.4f} +/- {std:.4f}")


def cmd_predict(args):
    cfg = _config(args)
    model = ScreeningModel.load(args.model)
    schema = load_schema(cfg.schema) if cfg.schema else None
    records = filter_consent(parse_roster(args.roster, schema, require_outcome=False))
    key = load_key(cfg.key_file)
    stamp = args.generated_at or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    full, flagged = phase_predictions(model, records, args.phase, phases=cfg.phases, key=key,
                                      threshold=args.threshold, generated_at=stamp)
    out = _out(args, "predictions")
    _write(out / f"predictions_{args.phase}_all.csv", full.to_csv())
    _write(out / f"predictions_{args.phase}_at_risk.csv", flagged.to_csv())
    print(f"{len(full)} students scored, {len(flagged)} flagged at risk ({args.phase})")


def cmd_report(args):
    cfg = _config(args)
    if args.predictions or args.outcomes:
        if not (args.predictions and args.outcomes):
            raise ConfigError("--predictions and --outcomes must be given together")
        preds = PredictionList.from_csv(Path(args.predictions).read_text(encoding="utf-8"))
        key = load_key(cfg.key_file)
        schema = load_schema(cfg.schema) if cfg.schema else None
        final = pseudonymize(filter_consent(parse_roster(args.outcomes, schema)), key)
        from .ingest import derive_at_risk_labels

        labels = derive_at_risk_labels(final, cfg.risk_rule).labels
        rep = misprediction_rate(preds, {r.student_id: int(v) for r, v in zip(final, labels)})
        out = _out(args, "report")
        _write(out / "misprediction_report.txt", rep.to_text())
        print(rep.to_text(), end="")
        return
    bundle = run_pipeline(cfg, load_key(cfg.key_file), args.out or cfg.out_dir or "bundle")
    for table in bundle.tables.values():
        print(table.to_markdown())
    print(f"bundle: {bundle.path} ({len(bundle.manifest['files'])} files)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value pipeline config file")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--roster", help="roster CSV (overrides config)")
    data.add_argument("--schema", help="feature schema sidecar CSV (overrides config)")
    data.add_argument("--key-file", dest="key_file", help="file holding the pseudonymization key")

    models = argparse.ArgumentParser(add_help=False)
    models.add_argument("--model", action="append", help="model kind (repeatable); default: all configured")
    models.add_argument("--phase-restrict", dest="phase_restrict",
                        help="train only on features available by the end of this phase")
    models.add_argument("--resample-before-split", action="store_true",
                        help="oversample before splitting (reproduces 196-row evaluations; leaks synthetic rows)")

    p = argparse.ArgumentParser(prog="atrisk", description="At-risk student screening pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic roster, schema and ground truth")
    s.add_argument("--n-students", type=int, default=119)
    s.add_argument("--n-at-risk", type=int, default=21)
    s.add_argument("--separation", type=float, default=1.5)
    s.add_argument("--missing-rate", type=float, default=0.05)
    s.add_argument("--n-nonconsenting", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common, data], help="pseudonymize roster and derive labels")
    s.set_defaults(func=cmd_ingest)
    s = sub.add_parser("features", parents=[common, data], help="impute and rank features")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common, data, models], help="train deployable screening models")
    s.add_argument("--resampler", choices=RESAMPLERS, default="none")
    s.set_defaults(func=cmd_train)
    s = sub.add_parser("evaluate", parents=[common, data, models], help="stratified holdout evaluation")
    s.add_argument("--resampler", action="append", choices=RESAMPLERS, help="repeatable; default: all configured")
    s.set_defaults(func=cmd_evaluate)
    s = sub.add_parser("crossval", parents=[common, data, models], help="stratified k-fold cross-validation")
    s.add_argument("--resampler", action="append", choices=RESAMPLERS, help="repeatable; default: all configured")
    s.add_argument("--repeats", type=int, default=None, help="repeat CV with R different fold seeds")
    s.set_defaults(func=cmd_crossval)

    s = sub.add_parser("predict", parents=[common, data], help="score a phase roster with a saved model")
    s.add_argument("--model", required=True, help="screening model JSON")
    s.add_argument("--phase", required=True, help="phase name, e.g. phase1")
    s.add_argument("--threshold", type=float, default=None)
    s.add_argument("--generated-at", dest="generated_at", default=None)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("report", parents=[common, data], help="full pipeline bundle, or a misprediction report")
    s.add_argument("--predictions", help="prediction list CSV from `predict`")
    s.add_argument("--outcomes", help="final roster CSV with grades")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except AtRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
