"""Pipeline configuration and semester phase windows.

Config files are flat ``key = value`` text (INI syntax, section header
optional). Model hyperparameters use dotted keys, e.g. ``rforest.n_trees = 50``.
See README for the full key list.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .exceptions import ConfigError
from .ingest import DEFAULT_FAILING_GRADES, RiskRule
from .models import MODEL_KINDS, DEFAULT_MODELS, ModelSpec
from .resample import METHODS, ResamplerConfig


@dataclass(frozen=True)
class PhaseWindow:
    """Weeks ``w`` with ``start < w <= end``."""

    name: str
    start: int
    end: int

    def __contains__(self, week: int) -> bool:
        return self.start < week <= self.end


DEFAULT_PHASES = (PhaseWindow("phase1", 0, 8), PhaseWindow("phase2", 8, 12), PhaseWindow("phase3", 12, 16))


def validate_phases(phases, first_week=1, last_week=16):
    """Windows must be contiguous and non-overlapping and cover first..last week."""
    if not phases:
        raise ConfigError("at least one phase window is required")
    names = [p.name for p in phases]
    if len(set(names)) != len(names):
        raise ConfigError("phase names must be unique")
    for p in phases:
        if p.end <= p.start:
            raise ConfigError(f"phase {p.name} is empty ({p.start}, {p.end}]")
    for a, b in zip(phases, phases[1:]):
        if b.start != a.end:
            raise ConfigError(f"phases {a.name} and {b.name} must meet at one boundary week (gap or overlap)")
    if phases[0].start != first_week - 1 or phases[-1].end != last_week:
        raise ConfigError(f"phases must cover weeks {first_week}-{last_week}")
    return tuple(phases)


def parse_phases(text: str):
    """``name:start-end,...`` with each window covering (start, end]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            name, span = part.split(":")
            start, end = span.split("-")
            out.append(PhaseWindow(name.strip(), int(start), int(end)))
        except ValueError:
            raise ConfigError(f"bad phase window {part!r}; expected name:start-end") from None
    return validate_phases(out, out[0].start + 1 if out else 1, out[-1].end if out else 16)


def phase_of_week(week: int, phases=DEFAULT_PHASES) -> str:
    for p in phases:
        if week in p:
            return p.name
    raise ConfigError(f"week {week} falls outside every phase window")


def get_phase(name: str, phases=DEFAULT_PHASES) -> PhaseWindow:
    for p in phases:
        if p.name == name:
            return p
    raise ConfigError(f"unknown phase {name!r}; known: {[p.name for p in phases]}")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    roster: str | None = None
    schema: str | None = None
    key_file: str | None = None
    out_dir: str | None = None
    risk_rule: RiskRule = field(default_factory=RiskRule)
    selection: str = "correlation"
    k_features: int = 10
    importance_trees: int = 100
    resamplers: tuple[str, ...] = ("none", "smote", "adasyn")
    k_neighbors: int = 5
    target_ratio: float = 1.0
    beta: float = 1.0
    resample_before_split: bool = False
    models: tuple[ModelSpec, ...] = ()
    test_fraction: float = 0.2
    cv_k: int = 10
    cv_repeats: int = 1
    threshold: float = 0.5
    phases: tuple[PhaseWindow, ...] = DEFAULT_PHASES
    phase: str | None = None

    def __post_init__(self):
        if not self.models:
            object.__setattr__(self, "models", tuple(ModelSpec(k, seed=self.seed) for k in DEFAULT_MODELS))
        if self.selection not in ("correlation", "forest_importance"):
            raise ConfigError(f"selection must be correlation or forest_importance, got {self.selection!r}")
        if self.k_features < 1:
            raise ConfigError("k_features must be >= 1")
        for m in self.resamplers:
            if m not in METHODS:
                raise ConfigError(f"unknown resampler {m!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.cv_k < 2 or self.cv_repeats < 1:
            raise ConfigError("cv_k must be >= 2 and cv_repeats >= 1")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.phase is not None:
            get_phase(self.phase, self.phases)

    def resampler(self, method: str) -> ResamplerConfig:
        return ResamplerConfig(method, self.k_neighbors, self.target_ratio, self.beta, self.seed)

    def with_seed(self, seed: int) -> "PipelineConfig":
        models = tuple(replace(m, seed=seed) for m in self.models)
        return replace(self, seed=seed, models=models)

    def describe(self) -> dict:
        """JSON-able echo of the configuration (no secrets, no paths to data)."""
        d = asdict(self)
        for k in ("roster", "schema", "key_file", "out_dir"):
            d.pop(k)
        d["risk_rule"] = {
            "failing_grades": sorted(self.risk_rule.failing_grades),
            "require_repeat": self.risk_rule.require_repeat,
            "conjunction": self.risk_rule.conjunction,
        }
        d["models"] = [{"kind": m.kind, "hyperparameters": dict(m.hyperparameters), "seed": m.seed} for m in self.models]
        d["phases"] = [asdict(p) for p in self.phases]
        return d


def _value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def _bool(key, text):
    v = _value(text)
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: expected true/false, got {text!r}")
    return v


def _list(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


_SCALARS = {
    "seed": int, "k_features": int, "importance_trees": int, "k_neighbors": int, "cv_k": int, "cv_repeats": int,
    "target_ratio": float, "beta": float, "test_fraction": float, "threshold": float,
}
_STRINGS = ("roster", "schema", "key_file", "out_dir", "selection", "phase")


def load_config(path) -> PipelineConfig:
    text = Path(path).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[pipeline]\n" + text
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    items: dict[str, str] = {}
    for section in parser.sections():
        items.update(parser.items(section))
    return config_from_mapping(items, base=Path(path).parent)


def config_from_mapping(items: dict, base: Path | None = None) -> PipelineConfig:
    kw: dict = {}
    rule = {}
    hyper: dict[str, dict] = {}
    model_kinds = None
    for key, raw in items.items():
        raw = str(raw)
        if "." in key:
            kind, param = key.split(".", 1)
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model section in key {key!r}")
            hyper.setdefault(kind, {})[param] = _value(raw)
        elif key in _SCALARS:
            try:
                kw[key] = _SCALARS[key](raw)
            except ValueError:
                raise ConfigError(f"{key}: expected {_SCALARS[key].__name__}, got {raw!r}") from None
        elif key in _STRINGS:
            v = raw.strip() or None
            if v is not None and key in ("roster", "schema", "key_file", "out_dir") and base is not None:
                v = str((base / v).resolve()) if not Path(v).is_absolute() else v
            kw[key] = v
        elif key == "resamplers":
            kw["resamplers"] = _list(raw)
        elif key == "resample_before_split":
            kw[key] = _bool(key, raw)
        elif key == "models":
            model_kinds = _list(raw)
        elif key == "phases":
            kw["phases"] = parse_phases(raw)
        elif key == "failing_grades":
            rule["failing_grades"] = frozenset(_list(raw))
        elif key == "require_repeat":
            rule["require_repeat"] = _bool(key, raw)
        elif key == "risk_conjunction":
            rule["conjunction"] = _bool(key, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if rule:
        kw["risk_rule"] = RiskRule(**{"failing_grades": DEFAULT_FAILING_GRADES, **rule})
    seed = kw.get("seed", 0)
    kinds = model_kinds or DEFAULT_MODELS
    kw["models"] = tuple(ModelSpec(k, hyper.get(k, {}), seed) for k in kinds)
    return PipelineConfig(**kw)
