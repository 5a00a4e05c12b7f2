"""Roster parsing, consent filtering, pseudonymization and label derivation."""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import logging
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import AtRiskWarning, ConfigError, DataError

logger = logging.getLogger(__name__)

GRADE_ALPHABET = (
    "A+", "A", "A-", "B+", "B", "B-", "C+", "C", "C-",
    "D+", "D", "D-", "F", "W", "WU",
)
DEFAULT_FAILING_GRADES = frozenset({"D+", "D", "D-", "F", "WU"})

REQUIRED_COLUMNS = ("student_id", "consent", "letter_grade", "repeated_course")
OUTCOME_COLUMNS = ("letter_grade", "repeated_course")
IDENTIFIER_COLUMNS = ("student_id", "name", "email")
RESERVED_COLUMNS = frozenset(REQUIRED_COLUMNS) | {"name", "email"}

CATEGORIES = ("performance", "demographic", "engagement")
FEATURE_TYPES = ("numeric", "boolean", "categorical")

KEY_ENV_VAR = "ATRISK_PSEUDONYM_KEY"
TOKEN_LENGTH = 20

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def parse_bool(token: str) -> bool:
    t = token.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean token: {token!r}")


def normalize_grade(token: str) -> str:
    # Accept typographic minus signs from spreadsheet exports.
    g = token.strip().upper().replace("−", "-").replace("–", "-")
    if g not in GRADE_ALPHABET:
        raise ValueError(f"unknown grade token {token!r}")
    return g


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    category: str | None = None
    type: str | None = None
    available_from_week: int = 1


@dataclass(frozen=True)
class RosterSchema:
    """Feature declarations from the schema sidecar, keyed by column name."""

    features: tuple[FeatureSpec, ...] = ()

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("schema declares a feature more than once")

    def get(self, name: str) -> FeatureSpec | None:
        for f in self.features:
            if f.name == name:
                return f
        return None

    def available_in(self, week: int) -> list[str]:
        """Names of declared features observable by the end of ``week``."""
        return [f.name for f in self.features if f.available_from_week <= week]


def load_schema(path: str | Path) -> RosterSchema:
    """Read the sidecar CSV ``feature,category[,type][,available_from_week]``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "feature" not in reader.fieldnames:
            raise ConfigError(f"{path}: schema sidecar needs a 'feature' column")
        specs = []
        for lineno, row in enumerate(reader, start=2):
            category = (row.get("category") or "").strip().lower() or None
            if category is not None and category not in CATEGORIES:
                raise ConfigError(f"{path}:{lineno}: unknown category {category!r}")
            ftype = (row.get("type") or "").strip().lower() or None
            if ftype is not None and ftype not in FEATURE_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown feature type {ftype!r}")
            week = (row.get("available_from_week") or "").strip()
            try:
                week_n = int(week) if week else 1
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad available_from_week {week!r}") from None
            specs.append(FeatureSpec(row["feature"].strip(), category, ftype, week_n))
    return RosterSchema(tuple(specs))


def write_schema(schema: RosterSchema, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "category", "type", "available_from_week"])
        for f in schema.features:
            w.writerow([f.name, f.category or "", f.type or "", f.available_from_week])


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    consent: bool
    letter_grade: str | None = None
    repeated_course: bool | None = None
    name: str | None = None
    email: str | None = None
    features: Mapping[str, str | None] = field(default_factory=dict)
    pseudonymized: bool = False


@dataclass(frozen=True)
class RiskRule:
    """At-risk iff grade is failing AND (if ``require_repeat``) the course was repeated.

    ``require_repeat=False`` turns the rule into a grade-only test; setting
    ``conjunction=False`` makes it a disjunction (failing grade OR repeat).
    """

    failing_grades: frozenset[str] = DEFAULT_FAILING_GRADES
    require_repeat: bool = True
    conjunction: bool = True

    def __post_init__(self):
        grades = frozenset(normalize_grade(g) for g in self.failing_grades)
        if not grades:
            raise ConfigError("RiskRule.failing_grades must be nonempty")
        object.__setattr__(self, "failing_grades", grades)

    def __call__(self, grade: str, repeated: bool) -> bool:
        failing = grade in self.failing_grades
        if not self.require_repeat:
            return failing
        if self.conjunction:
            return failing and repeated
        return failing or repeated


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise DataError("labels must be 0/1")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def positive_count(self) -> int:
        return int(self.labels.sum())

    @property
    def negative_count(self) -> int:
        return int(self.labels.size - self.labels.sum())

    def __len__(self):
        return int(self.labels.size)

    def __array__(self, dtype=None, copy=None):
        return self.labels if dtype is None else self.labels.astype(dtype)


def _read_text(source) -> tuple[str, str]:
    """Return (text, display name) for a path, bytes or file-like source."""
    if isinstance(source, (bytes, bytearray)):
        data, where = bytes(source), "<bytes>"
    elif hasattr(source, "read"):
        data, where = source.read(), getattr(source, "name", "<stream>")
        if isinstance(data, str):
            return data, where
    else:
        path = Path(source)
        if path.suffix.lower() in (".xlsx", ".xls"):
            raise DataError(f"{path}: spreadsheet files are not supported; export the sheet to CSV (UTF-8) first")
        try:
            data, where = path.read_bytes(), str(path)
        except OSError as exc:
            raise DataError(f"cannot read roster: {exc}") from None
    if data[:4] == b"PK\x03\x04":
        raise DataError(f"{where}: looks like an XLSX workbook; export the sheet to CSV (UTF-8) first")
    try:
        return data.decode("utf-8-sig"), where
    except UnicodeDecodeError as exc:
        raise DataError(f"{where}: roster is not valid UTF-8 ({exc})") from None


def parse_roster(source, schema: RosterSchema | None = None, *, require_outcome: bool = True) -> list[StudentRecord]:
    """Parse a roster CSV into records.

    ``source`` may be a path, raw bytes, or an open stream. Columns other than the
    identifier/outcome ones become features; empty cells become ``None``.
    With ``require_outcome=False`` (mid-semester phase files) the grade and
    repeat columns may be absent.
    """
    text, where = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{where}: missing header row") from None
    if len(set(header)) != len(header):
        raise DataError(f"{where}: duplicate column names in header")
    required = REQUIRED_COLUMNS if require_outcome else ("student_id", "consent")
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{where}: missing required column(s): {', '.join(missing)}")
    if schema is not None:
        undeclared = [f.name for f in schema.features if f.name not in header]
        if require_outcome and undeclared:
            logger.warning("%s: schema features absent from roster: %s", where, undeclared)
    feature_cols = [h for h in header if h not in RESERVED_COLUMNS]

    records: list[StudentRecord] = []
    seen: dict[str, int] = {}
    for rowno, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{where}: row {rowno} has {len(row)} cells, header has {len(header)}")
        cells = {h: (v.strip() or None) for h, v in zip(header, row)}

        sid = cells["student_id"]
        if sid is None:
            raise DataError(f"{where}: row {rowno}, column student_id: empty identifier")
        if sid in seen:
            raise DataError(f"{where}: row {rowno}: duplicate student_id (first seen on row {seen[sid]})")
        seen[sid] = rowno

        def _bool(col):
            v = cells.get(col)
            if v is None:
                return None
            try:
                return parse_bool(v)
            except ValueError:
                raise DataError(f"{where}: row {rowno}, column {col}: not a boolean: {v!r}") from None

        consent = _bool("consent")
        if consent is None:
            raise DataError(f"{where}: row {rowno}, column consent: empty consent flag")
        grade = cells.get("letter_grade")
        if grade is not None:
            try:
                grade = normalize_grade(grade)
            except ValueError:
                raise DataError(f"{where}: row {rowno}, column letter_grade: unknown grade token {grade!r}") from None

        records.append(
            StudentRecord(
                student_id=sid,
                consent=consent,
                letter_grade=grade,
                repeated_course=_bool("repeated_course"),
                name=cells.get("name"),
                email=cells.get("email"),
                features={c: cells[c] for c in feature_cols},
            )
        )
    return records


def filter_consent(records: Sequence[StudentRecord]) -> list[StudentRecord]:
    kept = [r for r in records if r.consent]
    if records and not kept:
        warnings.warn("no record carries consent; the roster is empty after filtering", AtRiskWarning, stacklevel=2)
    elif len(kept) < len(records):
        logger.info("dropped %d non-consenting record(s)", len(records) - len(kept))
    return kept


def load_key(key_file: str | Path | None = None) -> bytes:
    """Fetch the pseudonymization key from a key file or the environment."""
    if key_file is not None:
        key = Path(key_file).read_bytes().strip()
    else:
        key = os.environ.get(KEY_ENV_VAR, "").encode()
    if not key:
        raise ConfigError(f"no pseudonymization key: set {KEY_ENV_VAR} or pass a key file")
    return key


def _substrings(raw: str, width: int = 4) -> set[str]:
    raw = raw.lower()
    return {raw[i:i + width] for i in range(len(raw) - width + 1)}


def pseudonym(raw_id: str, key: bytes) -> str:
    """Keyed HMAC-SHA256 token (hex, ``TOKEN_LENGTH`` chars).

    If the hex happens to reproduce a 4-character run of the raw id, the
    counter is bumped and the hash recomputed, so tokens never leak fragments
    of the identifier. The result is still a deterministic function of
    (key, raw_id).
    """
    if not key:
        raise ConfigError("pseudonymization key must be nonempty")
    banned = _substrings(raw_id)
    counter = 0
    while True:
        msg = counter.to_bytes(4, "big") + raw_id.encode("utf-8")
        token = hmac.new(key, msg, hashlib.sha256).hexdigest()[:TOKEN_LENGTH]
        if not any(s in token for s in banned):
            return token
        counter += 1


def pseudonymize(records: Iterable[StudentRecord], key: bytes) -> list[StudentRecord]:
    if not key:
        raise ConfigError("pseudonymization key must be nonempty")
    out = []
    for r in records:
        if r.pseudonymized:
            out.append(r)
            continue
        out.append(replace(r, student_id=pseudonym(r.student_id, key), name=None, email=None, pseudonymized=True))
    return out


def derive_at_risk_labels(records: Sequence[StudentRecord], rule: RiskRule | None = None) -> LabelVector:
    rule = rule or RiskRule()
    labels = []
    for i, r in enumerate(records):
        if r.letter_grade is None:
            raise DataError(f"record {i} ({'pseudonym ' if r.pseudonymized else ''}{r.student_id}): missing letter_grade")
        if r.repeated_course is None and rule.require_repeat:
            raise DataError(f"record {i}: missing repeated_course flag")
        labels.append(int(rule(r.letter_grade, bool(r.repeated_course))))
    return LabelVector(np.array(labels, dtype=np.int64))


def write_records(records: Sequence[StudentRecord], path: str | Path, labels: LabelVector | None = None) -> None:
    """Write pseudonymized records as CSV. Refuses records that still carry PII."""
    from .exceptions import PrivacyError

    if any(not r.pseudonymized for r in records):
        raise PrivacyError("refusing to write records that were not pseudonymized")
    feature_cols: list[str] = []
    for r in records:
        for c in r.features:
            if c not in feature_cols:
                feature_cols.append(c)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["student_id", "consent", "letter_grade", "repeated_course", *feature_cols]
        if labels is not None:
            head.append("at_risk")
        w.writerow(head)
        for i, r in enumerate(records):
            row = [
                r.student_id,
                str(r.consent).lower(),
                r.letter_grade or "",
                "" if r.repeated_course is None else str(r.repeated_course).lower(),
                *[r.features.get(c) or "" for c in feature_cols],
            ]
            if labels is not None:
                row.append(int(labels.labels[i]))
            w.writerow(row)
