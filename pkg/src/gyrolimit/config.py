"""Flat ``key = value`` run configuration.

Lines are ``key = value`` pairs; ``#`` starts a comment. Lists are comma
separated. Required keys: ``mode``, ``eps``, ``gamma``, ``N``, ``t_end``.
Every other key has a default (see :data:`DEFAULTS`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable

from .vp_sim import InitialDataSpec


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line number."""

    def __init__(self, key: str | None, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        prefix = f"{key}: " if key else ""
        super().__init__(f"{prefix}{message}{where}")


@dataclass(frozen=True)
class RunConfig:
    mode: str
    eps: tuple[float, ...]
    gamma: float
    N: int
    t_end: float
    c_rot: float = 0.1
    delta: float = 0.05
    stride: int = 10
    mass: float = 0.9
    region: str = "disk"
    r_inner: float = 0.2
    r_outer: float = 1.0
    disk_offset: tuple[float, ...] = (1.0, 0.0)
    disk_radius: float = 0.6
    v_radius: float = 1.0
    exclusion: float = 0.2
    height_coef: float = 0.0
    height_exp: float = 1.0
    sampling: str = "stratified"
    xi0: tuple[float, ...] = (0.0, 0.0)
    eta0: tuple[float, ...] = (0.0, 0.0)
    dt_vw: float = 0.01
    checkpoints: tuple[float, ...] = (0.5, 1.0)
    conc_radii: tuple[float, ...] = (0.25, 0.1, 0.05, 0.01)
    dict_extent: float = 2.0
    dict_spacing: float = 0.5
    dict_widths: tuple[float, ...] = (0.5, 1.0)
    out: str = "runs"
    seed: int = 0
    threads: int = 1

    def initial_data(self) -> InitialDataSpec:
        return InitialDataSpec(
            n_particles=self.N, mass=self.mass, region=self.region, r_inner=self.r_inner,
            r_outer=self.r_outer, disk_offset=self.disk_offset, disk_radius=self.disk_radius,
            v_radius=self.v_radius, exclusion=self.exclusion, height_coef=self.height_coef,
            height_exp=self.height_exp, sampling=self.sampling, seed=self.seed,
        )

    def dt(self, eps: float) -> float:
        return self.c_rot * eps**2


REQUIRED = ("mode", "eps", "gamma", "N", "t_end")
DEFAULTS = {f.name: f.default for f in fields(RunConfig) if f.name not in REQUIRED}


def _float(text: str) -> float:
    val = float(text)
    if not math.isfinite(val):
        raise ValueError("not finite")
    return val


def _int(text: str) -> int:
    return int(text)


def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if parts == [""]:
        return ()
    return tuple(_float(p) for p in parts)


def _pair(text: str) -> tuple[float, ...]:
    vals = _floats(text)
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return vals


def _str(text: str) -> str:
    if not text:
        raise ValueError("empty value")
    return text


def _pos(x) -> bool:
    return x > 0


def _nonneg(x) -> bool:
    return x >= 0


# key -> (parser, check, requirement shown on failure)
_SCHEMA: dict[str, tuple[Callable, Callable, str]] = {
    "mode": (_str, lambda s: s in ("vp", "vw", "sweep"), "one of vp, vw, sweep"),
    "eps": (_floats, lambda v: len(v) > 0 and all(0 < e < 1 for e in v), "nonempty list in (0, 1)"),
    "gamma": (_float, _nonneg, ">= 0"),
    "N": (_int, _pos, "a positive integer"),
    "t_end": (_float, _pos, "> 0"),
    "c_rot": (_float, _pos, "> 0"),
    "delta": (_float, _nonneg, ">= 0"),
    "stride": (_int, _pos, "a positive integer"),
    "mass": (_float, lambda m: 0 < m < 1, "in (0, 1)"),
    "region": (_str, lambda s: s in ("disk", "annulus"), "disk or annulus"),
    "r_inner": (_float, _nonneg, ">= 0"),
    "r_outer": (_float, _pos, "> 0"),
    "disk_offset": (_pair, lambda v: True, "a pair"),
    "disk_radius": (_float, _pos, "> 0"),
    "v_radius": (_float, _pos, "> 0"),
    "exclusion": (_float, _pos, "> 0"),
    "height_coef": (_float, _nonneg, ">= 0"),
    "height_exp": (_float, _nonneg, ">= 0"),
    "sampling": (_str, lambda s: s in ("stratified", "grid"), "stratified or grid"),
    "xi0": (_pair, lambda v: True, "a pair"),
    "eta0": (_pair, lambda v: True, "a pair"),
    "dt_vw": (_float, _pos, "> 0"),
    "checkpoints": (_floats, lambda v: all(c > 0 for c in v), "positive times"),
    "conc_radii": (_floats, lambda v: all(0 < r < 0.5 for r in v), "radii in (0, 0.5)"),
    "dict_extent": (_float, _pos, "> 0"),
    "dict_spacing": (_float, _pos, "> 0"),
    "dict_widths": (_floats, lambda v: len(v) > 0 and all(w > 0 for w in v), "nonempty positive list"),
    "out": (_str, lambda s: True, "a path"),
    "seed": (_int, _nonneg, ">= 0"),
    "threads": (_int, _pos, "a positive integer"),
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown key", lineno)
        if key in values:
            raise ConfigError(key, "duplicate key", lineno)
        parser, check, need = _SCHEMA[key]
        try:
            parsed = parser(val)
        except ValueError:
            raise ConfigError(key, f"cannot parse {val!r}", lineno) from None
        if not check(parsed):
            raise ConfigError(key, f"must be {need}, got {val!r}", lineno)
        values[key] = parsed
        lines[key] = lineno
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(key, "missing required key")
    if values["mode"] != "vw" and not values["gamma"] > 0:
        raise ConfigError("gamma", "must be > 0 for finite-eps runs", lines["gamma"])
    cfg = RunConfig(**values)
    try:
        spec = cfg.initial_data()
        if spec.region == "annulus" and not spec.exclusion <= spec.r_inner < spec.r_outer:
            raise ValueError("need exclusion <= r_inner < r_outer")
        if spec.region == "disk" and math.hypot(*spec.disk_offset) - spec.disk_radius < spec.exclusion:
            raise ValueError("disk must stay at distance >= exclusion from the charge")
    except ValueError as exc:
        key = "region"
        raise ConfigError(key, f"infeasible initial data: {exc}", lines.get(key)) from None
    return cfg


def _fmt(val) -> str:
    if isinstance(val, tuple):
        return ", ".join(_fmt(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def serialize(cfg: RunConfig) -> str:
    """Render every key, so the output parses back to an equal config."""
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))
