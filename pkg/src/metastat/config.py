"""Run configuration stored as an INI file.

Every field has a default, so an empty file is a valid configuration.
``RunConfig.from_ini(cfg.to_ini()) == cfg`` holds exactly: floats are
written with ``repr``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .boundary import EmissionProfile, Side
from .errors import ConfigError
from .growth import GrowthParams

INITIAL_KINDS = ("zero", "gaussian", "lattice_csv")
SOURCE_MODES = ("none", "primary_tumor", "table")
PROFILES = ("hat", "table")


@dataclass(frozen=True)
class EmissionConfig:
    m: float = 0.1
    alpha: float = 2.0 / 3.0
    profile: str = "hat"
    side: int = 1
    center: float | None = None
    width: float | None = None
    table: str | None = None


@dataclass(frozen=True)
class GridConfig:
    I: int = 128
    J: int = 128
    tau_max: float | None = None
    horizon: float = 20.0


@dataclass(frozen=True)
class InitialConfig:
    """Initial density: zero, a physical gaussian bump, or lattice values from CSV."""

    kind: str = "gaussian"
    center: tuple = (1.8, 1.5)
    width: float = 0.15
    amplitude: float = 1.0
    path: str | None = None


@dataclass(frozen=True)
class SourceConfig:
    mode: str = "primary_tumor"
    x_p0: tuple = (1.0, 2.0)
    path: str | None = None


@dataclass(frozen=True)
class Tolerances:
    ode_tol: float = 1e-10
    root_tol: float = 1e-12
    quad_tol: float = 1e-8
    mean_value_tol: float = 1e-3


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    snapshots: tuple = (0.0, 20.0)
    n_trajectories: int = 16
    phase_horizon: float = 60.0
    phase_samples: int = 601
    lambda_min: float = 0.01
    lambda_max: float = 1.0
    n_lambda: int = 100
    comparison_pairs: int = 5
    flow_samples: int = 50


@dataclass(frozen=True)
class RunConfig:
    growth: GrowthParams = field(default_factory=GrowthParams)
    emission: EmissionConfig = field(default_factory=EmissionConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        validate(self)

    @classmethod
    def from_ini(cls, text: str, base_dir: str | Path | None = None) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case-sensitive (I, J)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        known = {f.name for f in fields(cls)}
        extra = set(parser.sections()) - known
        if extra:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(extra))}")
        parts = {}
        for f in fields(cls):
            default = f.default_factory()
            section = parser[f.name] if parser.has_section(f.name) else {}
            parts[f.name] = _read_section(f.name, section, default, base_dir)
        return cls(**parts)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_ini(text, base_dir=path.parent)

    def to_ini(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"[{f.name}]")
            part = getattr(self, f.name)
            for sub in fields(part):
                lines.append(f"{sub.name} = {_format(getattr(part, sub.name))}")
            lines.append("")
        return "\n".join(lines)

    def with_grid(self, **changes) -> "RunConfig":
        return replace(self, grid=replace(self.grid, **changes))

    def profile(self) -> EmissionProfile:
        b = self.growth.b
        e = self.emission
        if e.profile == "table":
            return EmissionProfile.load_csv(b, e.table)
        return EmissionProfile.hat(b, e.center, e.width, Side(e.side))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name: str, raw: str, default, field_type: str):
    raw = raw.strip()
    optional = "None" in field_type
    if raw == "":
        if optional:
            return None
        raise ConfigError(f"{name} must not be empty")
    try:
        if isinstance(default, tuple) or field_type.startswith("tuple"):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(raw)
        if isinstance(default, float) or field_type.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return raw


def _read_section(section_name, section, default, base_dir):
    known = {f.name: f for f in fields(default)}
    extra = set(section) - set(known)
    if extra:
        raise ConfigError(f"unknown key(s) in [{section_name}]: {', '.join(sorted(extra))}")
    values = {}
    for key, f in known.items():
        if key not in section:
            continue
        value = _parse(f"{section_name}.{key}", section[key], getattr(default, key), str(f.type))
        if key in ("path", "table") and value is not None and base_dir is not None:
            p = Path(value)
            value = str(p if p.is_absolute() else Path(base_dir) / p)
        values[key] = value
    return replace(default, **values) if values else default


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name}={value!r} must be a finite positive number")


def validate(cfg: RunConfig) -> None:
    """Raise :class:`ConfigError` with an actionable message for invalid settings."""
    b = cfg.growth.b
    e = cfg.emission
    if not (math.isfinite(e.m) and e.m >= 0):
        raise ConfigError(f"emission.m={e.m} must be finite and >= 0")
    if not math.isfinite(e.alpha):
        raise ConfigError("emission.alpha must be finite")
    if e.profile not in PROFILES:
        raise ConfigError(f"emission.profile must be one of {PROFILES}")
    if e.profile == "table" and not e.table:
        raise ConfigError("emission.profile = table needs emission.table = <csv path>")
    if e.side not in (1, 2, 3, 4):
        raise ConfigError("emission.side must be 1, 2, 3 or 4")
    g = cfg.grid
    if g.I < 8 or g.J < 8:
        raise ConfigError(f"grid.I={g.I}, grid.J={g.J}: both must be >= 8")
    if g.tau_max is not None:
        _positive("grid.tau_max", g.tau_max)
    _positive("grid.horizon", g.horizon)
    i = cfg.initial
    if i.kind not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}")
    if i.kind == "gaussian":
        if len(i.center) != 2 or not all(1.0 < v < b for v in i.center):
            raise ConfigError(f"initial.center must be a point inside (1, {b:.6g})^2")
        _positive("initial.width", i.width)
        if not math.isfinite(i.amplitude):
            raise ConfigError("initial.amplitude must be finite")
    if i.kind == "lattice_csv" and not i.path:
        raise ConfigError("initial.kind = lattice_csv needs initial.path")
    s = cfg.source
    if s.mode not in SOURCE_MODES:
        raise ConfigError(f"source.mode must be one of {SOURCE_MODES}")
    if s.mode == "primary_tumor":
        if len(s.x_p0) != 2 or not all(1.0 <= v <= b for v in s.x_p0):
            raise ConfigError(f"source.x_p0 must lie in the closed square [1, {b:.6g}]^2")
    if s.mode == "table" and not s.path:
        raise ConfigError("source.mode = table needs source.path")
    for f in fields(cfg.tolerances):
        _positive(f"tolerances.{f.name}", getattr(cfg.tolerances, f.name))
    r = cfg.run
    if r.n_trajectories < 1 or r.phase_samples < 2 or r.n_lambda < 2 or r.comparison_pairs < 0:
        raise ConfigError("run counts must be positive (n_lambda, phase_samples >= 2)")
    if r.flow_samples < 1:
        raise ConfigError("run.flow_samples must be >= 1")
    _positive("run.phase_horizon", r.phase_horizon)
    _positive("run.lambda_min", r.lambda_min)
    if r.lambda_max <= r.lambda_min:
        raise ConfigError("run.lambda_max must exceed run.lambda_min")
    if any(t < 0 or not math.isfinite(t) for t in r.snapshots):
        raise ConfigError("run.snapshots must be finite times >= 0")
