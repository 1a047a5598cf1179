"""Line-based run configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines are
ignored, keys are dotted (``window.x_center = 5.0``). Every key is checked
against the table below; unknown, duplicate or malformed entries are
reported with their line numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .basis import WindowRegion
from .correlators import DIRECT_MAX_NMAX, SERIES_TOL, STRATEGIES
from .errors import UsageError
from .feedback import NE_POLICIES, SIGMA_POLICIES, FeedbackPolicy
from .units import DP0, SODIUM_MASS_U, PhysicalConfig

T_UNITS = ("T0", "microK", "trap")
SPACINGS = ("linear", "log")
SCHEDULES = ("fixed", "move_out")
TRAJECTORY_MODES = ("exact", "grid", "ode")


class ConfigError(UsageError):
    """Configuration text could not be parsed or validated."""


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


def _floats(text):
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(_int(t) for t in text.split(",") if t.strip())


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("not a boolean")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    parse.__name__ = "one of " + "|".join(options)
    return parse


def _optional_float(text):
    return None if text.lower() == "none" else _float(text)


# key -> (parser, default)
SCHEMA: Dict[str, Tuple[object, object]] = {
    "physical.frequency_hz": (_float, None),
    "physical.mass_u": (_float, SODIUM_MASS_U),
    "N_tot": (_float, None),
    "cutoff.n_max": (_int, None),
    "window.x_center": (_float, 0.0),
    "window.y_center": (_float, 0.0),
    "window.x_width": (_float, 1.0),
    "window.y_width": (_float, 1.0),
    "feedback.sigma_policy": (_choice(SIGMA_POLICIES), "optimal"),
    "feedback.sigma": (_optional_float, None),
    "feedback.N_e_policy": (_choice(NE_POLICIES), "mean"),
    "feedback.N_e": (_optional_float, None),
    "sweep.T_min": (_float, 0.5),
    "sweep.T_max": (_float, 2.0),
    "sweep.T_unit": (_choice(T_UNITS), "T0"),
    "sweep.points": (_int, 31),
    "sweep.spacing": (_choice(SPACINGS), "linear"),
    "sweep.x_centers": (_floats, None),
    "trajectory.T_start": (_float, 7.6),
    "trajectory.T_target": (_float, 0.0),
    "trajectory.T_unit": (_choice(T_UNITS), "microK"),
    "trajectory.max_steps": (_int, 10**9),
    "trajectory.mode": (_choice(TRAJECTORY_MODES), "ode"),
    "trajectory.schedule": (_choice(SCHEDULES), "fixed"),
    "trajectory.switch_ratio": (_float, 1.2),
    "trajectory.switch_offset": (_float, 5.0),
    "trajectory.stop_on_heating": (_bool, True),
    "trajectory.stall_fraction": (_float, 1e-3),
    "trajectory.floor_ratio": (_float, 0.25),
    "trajectory.max_records": (_int, 10_000),
    "trajectory.grid_points": (_int, 33),
    "trajectory.grid_rtol": (_float, 1e-3),
    "trajectory.ode_rtol": (_float, 1e-6),
    "numerics.strategy": (_choice(STRATEGIES), "series"),
    "numerics.series_tol": (_float, SERIES_TOL),
    "numerics.direct_max_nmax": (_int, DIRECT_MAX_NMAX),
    "validate.toy_systems": (_int, 20),
    "validate.seed": (_int, 12345),
    "validate.projector_cutoffs": (_ints, (12, 24)),
    "output.path": (str, None),
}

REQUIRED = ("physical.frequency_hz", "N_tot")


@dataclass(frozen=True)
class RunConfig:
    """Validated settings; ``values`` maps every schema key to its value."""

    values: Dict[str, object]
    lines: Dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with dotted keys given as ``section__name=value`` replaced."""
        values = dict(self.values)
        for name, value in overrides.items():
            key = name.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = value
        cfg = RunConfig(values, self.lines)
        _validate(cfg)
        return cfg

    @property
    def physical(self) -> PhysicalConfig:
        return PhysicalConfig.from_frequency(self["physical.frequency_hz"], self["physical.mass_u"])

    @property
    def N_tot(self) -> float:
        return self["N_tot"]

    @property
    def n_max(self) -> Optional[int]:
        return self["cutoff.n_max"]

    def window(self, x_center: Optional[float] = None) -> WindowRegion:
        return WindowRegion(self["window.x_center"] if x_center is None else x_center,
                            self["window.y_center"], self["window.x_width"] / 2, self["window.y_width"] / 2)

    def windows(self) -> List[WindowRegion]:
        centers = self["sweep.x_centers"]
        if not centers:
            return [self.window()]
        return [self.window(c) for c in centers]

    @property
    def policy(self) -> FeedbackPolicy:
        sigma = self["feedback.sigma"]
        return FeedbackPolicy(self["feedback.sigma_policy"], None if sigma is None else sigma * DP0,
                              self["feedback.N_e_policy"], self["feedback.N_e"])

    @property
    def numerics(self) -> dict:
        return {"tol": self["numerics.series_tol"], "direct_max_nmax": self["numerics.direct_max_nmax"]}


def _validate(cfg: RunConfig):
    def fail(key, msg):
        where = f" (line {cfg.lines[key]})" if key in cfg.lines else ""
        raise ConfigError(f"{key}{where}: {msg}")

    v = cfg.values
    for key in REQUIRED:
        if v[key] is None:
            raise ConfigError(f"missing required key {key!r}")
    positive = ["physical.frequency_hz", "physical.mass_u", "N_tot", "sweep.T_min", "sweep.T_max",
                "trajectory.T_start", "trajectory.switch_ratio", "trajectory.floor_ratio",
                "trajectory.grid_rtol", "trajectory.ode_rtol", "numerics.series_tol"]
    for key in positive:
        if not v[key] > 0:
            fail(key, f"must be positive, got {v[key]!r}")
    for key in ("window.x_width", "window.y_width", "trajectory.T_target", "trajectory.switch_offset"):
        if not v[key] >= 0:
            fail(key, f"must be non-negative, got {v[key]!r}")
    if v["cutoff.n_max"] is not None and v["cutoff.n_max"] < 0:
        fail("cutoff.n_max", "must be non-negative")
    if v["sweep.points"] < 0:
        fail("sweep.points", "must be non-negative")
    if v["sweep.T_max"] < v["sweep.T_min"]:
        fail("sweep.T_max", "must not be below sweep.T_min")
    if v["trajectory.max_steps"] < 1:
        fail("trajectory.max_steps", "must be at least 1")
    if v["trajectory.max_records"] < 2:
        fail("trajectory.max_records", "must be at least 2")
    if v["trajectory.grid_points"] < 5:
        fail("trajectory.grid_points", "must be at least 5")
    if not 0 <= v["trajectory.stall_fraction"] < 1:
        fail("trajectory.stall_fraction", "must lie in [0, 1)")
    if v["validate.toy_systems"] < 0:
        fail("validate.toy_systems", "must be non-negative")
    if v["feedback.sigma_policy"] == "fixed" and not (v["feedback.sigma"] or 0) > 0:
        fail("feedback.sigma", "a positive value is required when feedback.sigma_policy = fixed")
    if v["feedback.N_e_policy"] == "fixed" and not (v["feedback.N_e"] or 0) > 0:
        fail("feedback.N_e", "a positive value is required when feedback.N_e_policy = fixed")


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; defaults fill unset keys."""
    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in lines:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {lines[key]})")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            kind = getattr(parser, "__name__", "value").lstrip("_")
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r} ({kind}: {exc})") from None
        lines[key] = lineno
    full = {key: values.get(key, default) for key, (_, default) in SCHEMA.items()}
    cfg = RunConfig(full, lines)
    _validate(cfg)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path!r} is not valid UTF-8") from None
    return parse_config(text)
