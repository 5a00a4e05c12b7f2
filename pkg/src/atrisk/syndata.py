"""Seeded synthetic rosters with the screening schema and class imbalance.

Every random draw (latent normals, category uniforms, missingness) is made
before ``separation`` is applied, so two rosters that differ only in
separation share the same underlying noise and differ only by the class
mean shift.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .ingest import DEFAULT_FAILING_GRADES, FeatureSpec, RosterSchema, write_schema


@dataclass(frozen=True)
class NumericFeature:
    name: str
    category: str
    mean: float
    sd: float
    shift: float = 0.0  # at-risk mean offset, in sd units per unit of separation
    low: float | None = None
    high: float | None = None
    decimals: int = 2
    available_from_week: int = 1


@dataclass(frozen=True)
class CategoricalFeature:
    name: str
    category: str
    levels: tuple[str, ...]
    weights: tuple[float, ...]
    tilt: tuple[float, ...] = ()  # per-level log-odds push for at-risk rows
    boolean: bool = False
    available_from_week: int = 1


# Core screening features first, then supplementary columns up to 25 features.
DEFAULT_FEATURES = (
    NumericFeature("Current Score", "performance", 80, 9, -1.2, 0, 100, available_from_week=13),
    CategoricalFeature("Assignment Missing", "demographic", ("false", "true"), (0.8, 0.2), (0.0, 0.9), boolean=True),
    NumericFeature("GPA", "demographic", 3.0, 0.45, -1.0, 0, 4),
    NumericFeature("Units Earned", "demographic", 62, 24, -0.5, 0, 160, decimals=0),
    NumericFeature("Page Views", "engagement", 850, 260, -0.9, 0, None, decimals=0),
    NumericFeature("Participation", "engagement", 24, 7, -0.9, 0, None, decimals=0),
    CategoricalFeature("Program Action", "demographic", ("ADMITTED", "DISQUALIFIED", "NONE", "PROBATION"),
                       (0.2, 0.02, 0.7, 0.08), (0.0, 0.8, -0.2, 0.8)),
    NumericFeature("Assignment on Time", "engagement", 86, 9, -1.0, 0, 100),
    NumericFeature("Student Engagement", "demographic", 70, 14, -0.8, 0, 100),
    NumericFeature("Units Attempting", "demographic", 13, 2.2, -0.3, 0, 21, decimals=0),
    CategoricalFeature("Generation Status", "demographic", ("CONTINUING", "FIRST_GEN"), (0.6, 0.4), (0.0, 0.2)),
    CategoricalFeature("Admission Status", "demographic", ("FIRST_TIME", "TRANSFER"), (0.7, 0.3)),
    NumericFeature("Age", "demographic", 21, 2.5, 0.1, 17, 45, decimals=0),
    NumericFeature("Quiz Average", "performance", 78, 11, -0.5, 0, 100, available_from_week=9),
    NumericFeature("Lab Score", "performance", 82, 10, -0.3, 0, 100, available_from_week=9),
    NumericFeature("Discussion Posts", "engagement", 12, 5, -0.3, 0, None, decimals=0),
    NumericFeature("Late Submissions", "engagement", 2, 1.5, 0.3, 0, None, decimals=0),
    NumericFeature("Office Hours Visits", "engagement", 1.5, 1.2, 0.0, 0, None, decimals=0),
    NumericFeature("Minutes Online", "engagement", 1400, 420, -0.2, 0, None, decimals=0),
    NumericFeature("Files Downloaded", "engagement", 40, 14, 0.0, 0, None, decimals=0),
    CategoricalFeature("Major", "demographic", ("CE", "CS", "EE", "ME"), (0.2, 0.45, 0.2, 0.15)),
    CategoricalFeature("Class Level", "demographic", ("FR", "JR", "SO", "SR"), (0.25, 0.25, 0.3, 0.2)),
    NumericFeature("Employment Hours", "demographic", 12, 8, 0.2, 0, 40, decimals=0),
    NumericFeature("Commute Minutes", "demographic", 30, 15, 0.0, 0, None, decimals=0),
    CategoricalFeature("Pell Eligible", "demographic", ("false", "true"), (0.55, 0.45), boolean=True),
)

# Class-mean gap at which every model family separates the classes on a
# 24-row holdout; used by the model sanity checks.
HIGH_SEPARATION = 3.0

PASSING_GRADES = ("A+", "A", "A-", "B+", "B", "B-", "C+", "C", "C-", "W")
_FIRST = ("Alex", "Bea", "Carlos", "Dana", "Eli", "Fatima", "Gus", "Hana", "Ivan", "Jia",
          "Kofi", "Lena", "Mateo", "Nia", "Omar", "Priya", "Quinn", "Rosa", "Sam", "Tariq")
_LAST = ("Alvarez", "Brooks", "Chen", "Diaz", "Evans", "Flores", "Garcia", "Huang", "Ito", "Jones",
         "Kim", "Lopez", "Martin", "Nguyen", "Ortiz", "Patel", "Reyes", "Singh", "Tran", "Wong")


@dataclass(frozen=True)
class GeneratorConfig:
    n_students: int = 119
    n_at_risk: int = 21
    seed: int = 0
    missing_rate: float = 0.05
    separation: float = 1.5
    features: tuple = DEFAULT_FEATURES
    failing_not_repeated_rate: float = 0.06
    n_nonconsenting: int = 0
    missing_rates: dict = field(default_factory=dict)  # per-feature override

    def __post_init__(self):
        if not 0 < self.n_at_risk < self.n_students:
            raise ConfigError("need 0 < n_at_risk < n_students")
        rates = [self.missing_rate, *self.missing_rates.values()]
        if any(not 0.0 <= r <= 0.5 for r in rates):
            raise ConfigError("missing rates must lie in [0, 0.5]")
        if self.separation < 0:
            raise ConfigError("separation must be >= 0")
        if self.n_nonconsenting < 0:
            raise ConfigError("n_nonconsenting must be >= 0")


@dataclass(frozen=True)
class SyntheticRoster:
    roster_csv: str
    schema: RosterSchema
    ground_truth_csv: str
    labels: np.ndarray  # consenting rows, roster order

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"roster": out / "roster.csv", "schema": out / "schema.csv", "ground_truth": out / "ground_truth.csv"}
        paths["roster"].write_text(self.roster_csv, encoding="utf-8")
        write_schema(self.schema, paths["schema"])
        paths["ground_truth"].write_text(self.ground_truth_csv, encoding="utf-8")
        return paths


def _format(value, decimals):
    if decimals == 0:
        return str(int(round(value)))
    return f"{value:.{decimals}f}"


def generate_roster(config: GeneratorConfig = GeneratorConfig()) -> SyntheticRoster:
    rng = np.random.default_rng(config.seed)
    n_total = config.n_students + config.n_nonconsenting
    labels = np.zeros(n_total, dtype=np.int64)
    labels[rng.permutation(config.n_students)[: config.n_at_risk]] = 1
    if config.n_nonconsenting:
        labels[config.n_students:] = rng.integers(0, 2, config.n_nonconsenting)
    consent = np.r_[np.ones(config.n_students, bool), np.zeros(config.n_nonconsenting, bool)]

    cwids = 100_000_000 + rng.choice(900_000_000, size=n_total, replace=False)
    first = rng.integers(0, len(_FIRST), n_total)
    last = rng.integers(0, len(_LAST), n_total)

    columns: dict[str, list[str]] = {}
    sep = config.separation
    for feat in config.features:
        latent = rng.standard_normal(n_total) if isinstance(feat, NumericFeature) else rng.random(n_total)
        miss_u = rng.random(n_total)
        rate = config.missing_rates.get(feat.name, config.missing_rate)
        if isinstance(feat, NumericFeature):
            vals = feat.mean + feat.sd * (latent + feat.shift * sep * labels)
            vals = np.clip(vals, feat.low if feat.low is not None else -np.inf, feat.high if feat.high is not None else np.inf)
            cells = [_format(v, feat.decimals) for v in vals]
        else:
            base = np.log(np.asarray(feat.weights, dtype=float))
            tilt = np.asarray(feat.tilt or (0.0,) * len(feat.levels), dtype=float)
            cells = []
            for u, lab in zip(latent, labels):
                logits = base + tilt * sep * lab
                p = np.exp(logits - logits.max())
                cdf = np.cumsum(p / p.sum())
                cells.append(feat.levels[min(int(np.searchsorted(cdf, u, side="right")), len(feat.levels) - 1)])
        columns[feat.name] = [("" if m < rate else c) for m, c in zip(miss_u, cells)]

    failing = sorted(DEFAULT_FAILING_GRADES)
    grade_u = rng.random(n_total)
    flip_u = rng.random(n_total)
    repeat_u = rng.random(n_total)
    grades, repeats = [], []
    for i in range(n_total):
        if labels[i] == 1:
            grades.append(failing[int(grade_u[i] * len(failing))])
            repeats.append(True)
        elif flip_u[i] < config.failing_not_repeated_rate:
            grades.append(failing[int(grade_u[i] * len(failing))])
            repeats.append(False)
        else:
            grades.append(PASSING_GRADES[int(grade_u[i] * len(PASSING_GRADES))])
            repeats.append(bool(repeat_u[i] < 0.1))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = [f.name for f in config.features]
    w.writerow(["student_id", "name", "email", "consent", "letter_grade", "repeated_course", *names])
    for i in range(n_total):
        fn, ln = _FIRST[first[i]], _LAST[last[i]]
        w.writerow([
            str(cwids[i]), f"{fn} {ln}", f"{fn.lower()}.{ln.lower()}{i}@example.edu",
            str(bool(consent[i])).lower(), grades[i], str(repeats[i]).lower(),
            *[columns[n][i] for n in names],
        ])

    gt = io.StringIO()
    gw = csv.writer(gt, lineterminator="\n")
    gw.writerow(["student_id", "at_risk"])
    for i in range(n_total):
        gw.writerow([str(cwids[i]), int(labels[i])])

    schema = RosterSchema(tuple(
        FeatureSpec(f.name, f.category,
                    "numeric" if isinstance(f, NumericFeature) else ("boolean" if f.boolean else "categorical"),
                    f.available_from_week)
        for f in config.features
    ))
    return SyntheticRoster(buf.getvalue(), schema, gt.getvalue(), labels[consent])
