"""Comparison tables, phase prediction lists and misprediction reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .exceptions import DataError
from .models import DISPLAY_NAMES

TABLE_METRICS = ("accuracy", "precision", "recall", "f1", "auc")
MODE_TITLES = {"none": "No Sampling", "smote": "SMOTE", "adasyn": "ADASYN"}


@dataclass(frozen=True)
class ComparisonTable:
    mode: str
    rows: tuple[tuple[str, dict], ...]  # (model kind, metric -> value)

    @property
    def best(self) -> str:
        """Model with the highest accuracy (first listed wins a tie)."""
        return max(self.rows, key=lambda r: r[1]["accuracy"])[0] if self.rows else ""

    def to_csv(self) -> str:
        extra = sorted({k for _, m in self.rows for k in m} - set(TABLE_METRICS))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", *TABLE_METRICS, *extra, "best_accuracy"])
        best = self.best
        for kind, m in self.rows:
            w.writerow([kind, *[f"{m[c]:.4f}" for c in (*TABLE_METRICS, *extra)], "*" if kind == best else ""])
        return buf.getvalue()

    def to_markdown(self) -> str:
        title = MODE_TITLES.get(self.mode, self.mode)
        lines = [f"### Model comparison using top features: {title}", "",
                 "| Model | Accuracy | Precision | Recall | F1 | AUC |", "|---|---|---|---|---|---|"]
        best = self.best
        for kind, m in self.rows:
            name = DISPLAY_NAMES.get(kind, kind) + (" (best)" if kind == best else "")
            lines.append("| " + " | ".join([name, *[f"{m[c]:.4f}" for c in TABLE_METRICS]]) + " |")
        return "\n".join(line.rstrip() for line in lines) + "\n"


def comparison_table(reports: Mapping, mode: str = "none", extra: Mapping | None = None) -> ComparisonTable:
    """One row per model from its evaluation report.

    Precision/recall/F1 are those of the at-risk class. ``extra`` maps a
    model to additional columns (e.g. cross-validated mean accuracy).
    """
    rows = []
    for kind, rep in reports.items():
        s = rep.summary()
        row = {m: s[m] for m in TABLE_METRICS}
        if extra and kind in extra:
            row.update(extra[kind])
        rows.append((kind, row))
    return ComparisonTable(mode, tuple(rows))


def comparison_tables(results: Mapping[str, Mapping], extra: Mapping | None = None) -> dict:
    """One :class:`ComparisonTable` per sampling mode."""
    return {mode: comparison_table(reps, mode, (extra or {}).get(mode)) for mode, reps in results.items()}


@dataclass(frozen=True)
class Prediction:
    student_id: str
    score: float
    label: int


@dataclass(frozen=True)
class PredictionList:
    entries: tuple[Prediction, ...]
    phase: str
    model_id: str
    generated_at: str = ""

    def at_risk(self) -> "PredictionList":
        return PredictionList(tuple(e for e in self.entries if e.label == 1), self.phase, self.model_id, self.generated_at)

    def __len__(self):
        return len(self.entries)

    def labels(self) -> dict[str, int]:
        return {e.student_id: e.label for e in self.entries}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["student_id", "score", "at_risk", "phase", "model", "generated_at"])
        for e in self.entries:
            w.writerow([e.student_id, f"{e.score:.6f}", e.label, self.phase, self.model_id, self.generated_at])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PredictionList":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            return cls((), "", "")
        try:
            entries = tuple(Prediction(r["student_id"], float(r["score"]), int(r["at_risk"])) for r in rows)
        except (KeyError, ValueError) as exc:
            raise DataError(f"malformed prediction list: {exc}") from None
        return cls(entries, rows[0].get("phase", ""), rows[0].get("model", ""), rows[0].get("generated_at", ""))


def build_prediction_list(ids, scores, threshold, phase, model_id, generated_at="") -> PredictionList:
    scores = np.asarray(scores, dtype=float)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    entries = tuple(Prediction(str(i), float(s), int(s >= threshold)) for i, s in zip(ids, scores))
    return PredictionList(entries, phase, model_id, generated_at)


@dataclass(frozen=True)
class MispredictionReport:
    joined: int
    mismatches: int
    false_positives: tuple[str, ...]
    false_negatives: tuple[str, ...]
    unjoined_predictions: tuple[str, ...]
    unjoined_outcomes: tuple[str, ...]

    @property
    def rate_exact(self) -> Fraction:
        return Fraction(self.mismatches, self.joined)

    @property
    def rate(self) -> float:
        return self.mismatches / self.joined

    @property
    def accuracy(self) -> float:
        return (self.joined - self.mismatches) / self.joined

    def to_text(self) -> str:
        lines = [
            f"joined: {self.joined}",
            f"mismatches: {self.mismatches}",
            f"misprediction_rate: {100 * self.rate_exact.numerator / self.rate_exact.denominator:.1f}%",
            f"false_positives ({len(self.false_positives)}): {' '.join(self.false_positives)}",
            f"false_negatives ({len(self.false_negatives)}): {' '.join(self.false_negatives)}",
            f"unjoined_predictions ({len(self.unjoined_predictions)}): {' '.join(self.unjoined_predictions)}",
            f"unjoined_outcomes ({len(self.unjoined_outcomes)}): {' '.join(self.unjoined_outcomes)}",
        ]
        return "\n".join(lines) + "\n"


def misprediction_rate(predictions, final_outcomes: Mapping[str, int]) -> MispredictionReport:
    """Compare issued predictions with final at-risk outcomes, joined on id."""
    pred = predictions.labels() if isinstance(predictions, PredictionList) else dict(predictions)
    joined = [sid for sid in pred if sid in final_outcomes]
    if not joined:
        raise DataError("no student id appears in both the predictions and the final outcomes")
    fp = tuple(s for s in joined if pred[s] == 1 and int(final_outcomes[s]) == 0)
    fn = tuple(s for s in joined if pred[s] == 0 and int(final_outcomes[s]) == 1)
    return MispredictionReport(
        joined=len(joined),
        mismatches=len(fp) + len(fn),
        false_positives=fp,
        false_negatives=fn,
        unjoined_predictions=tuple(s for s in pred if s not in final_outcomes),
        unjoined_outcomes=tuple(s for s in final_outcomes if s not in pred),
    )
