"""Experiment configuration files (TOML) and their validation."""

from __future__ import annotations

import json
import math
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dissipators import (Constant, DissipatorSpec, DopplerLorentz, JumpSpec,
                          QOMESpec, Tabulated, clip_profile, doppler_fit, isotropic_jumps,
                          matched_amplitude, optimal_profile)
from .fock import UnitSystem

DIM_MIN, DIM_MAX = 10, 80
EXPERIMENTS = ("fig1a", "fig1b", "fig2a", "steady", "diagnose", "sweep")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OptimalCfg(_Strict):
    kind: Literal["optimal"]
    theta: Optional[float] = None  # defaults to the experiment temperature
    amplitude: Union[float, Literal["matched"]] = "matched"


class ConstantCfg(_Strict):
    kind: Literal["constant"]
    c: float


class DopplerCfg(_Strict):
    kind: Literal["doppler"]
    c1: float
    c2: float
    c3: float

    @field_validator("c2")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("c2 must be nonzero")
        return v


class DopplerFitCfg(_Strict):
    kind: Literal["doppler_fit"]
    base: OptimalCfg


class TabulatedCfg(_Strict):
    kind: Literal["tabulated"]
    grid: List[float]
    values: List[float]


class ClippedCfg(_Strict):
    kind: Literal["clipped"]
    base: "ProfileCfg"


ProfileCfg = Annotated[
    Union[OptimalCfg, ConstantCfg, DopplerCfg, DopplerFitCfg, TabulatedCfg, ClippedCfg],
    Field(discriminator="kind"),
]
ClippedCfg.model_rebuild()


class JumpCfg(_Strict):
    kappa: float
    profile: ProfileCfg


class IsotropicCfg(_Strict):
    model: Literal["isotropic"]
    kappa: float = Field(ge=0)
    rate: float = Field(default=1.0, ge=0)
    profile: ProfileCfg


class JumpsCfg(_Strict):
    model: Literal["jumps"]
    rate: float = Field(default=1.0, ge=0)
    jumps: List[JumpCfg] = []


class QOMECfg(_Strict):
    model: Literal["qome"]
    Gamma: float = Field(ge=0)
    theta: float = Field(ge=0)


DissipatorCfg = Annotated[Union[IsotropicCfg, JumpsCfg, QOMECfg], Field(discriminator="model")]


class GridsCfg(_Strict):
    dx0: Optional[List[float]] = None
    theta: Optional[List[float]] = None
    kappa: Optional[List[float]] = None
    gamma: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check(self):
        for name in ("dx0", "theta", "kappa", "gamma"):
            vals = getattr(self, name)
            if vals is None:
                continue
            if not vals:
                raise ValueError(f"grid '{name}' must be nonempty")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"grid '{name}' has non-finite values")
        for name in ("theta", "kappa", "gamma"):
            vals = getattr(self, name)
            if vals is not None and any(v < 0 for v in vals):
                raise ValueError(f"grid '{name}' must be non-negative")
        return self


class ExperimentConfig(_Strict):
    experiment: Literal["fig1a", "fig1b", "fig2a", "steady", "diagnose", "sweep"]
    omega: float = Field(default=1.0, gt=0)
    dim: int = 30
    theta: float = Field(default=0.0, ge=0)
    kappa: float = Field(default=0.5, ge=0)
    dissipator: Optional[DissipatorCfg] = None
    grids: GridsCfg = GridsCfg()
    output: str = "out/result"
    emit_plots: bool = False
    workers: int = Field(default=1, ge=1)

    @field_validator("dim")
    @classmethod
    def _dim(cls, v):
        if not DIM_MIN <= v <= DIM_MAX:
            raise ValueError(f"dim must lie in [{DIM_MIN}, {DIM_MAX}], got {v}")
        return v

    @property
    def units(self) -> UnitSystem:
        return UnitSystem(omega=self.omega)

    def grid(self, name: str) -> list[float]:
        vals = getattr(self.grids, name)
        return list(vals) if vals is not None else list(DEFAULT_GRIDS[name])

    def normalized(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)

    def echo(self) -> str:
        return json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))


DEFAULT_GRIDS = {
    "dx0": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
    "theta": [0.0, 0.25, 0.5, 1.0, 2.0],
    "kappa": [0.1, 0.3, 0.5, 0.7, 0.9],
    "gamma": [0.05, 0.1, 0.2],
}

DEFAULT_CONFIGS = {
    "fig1a": {"experiment": "fig1a", "dim": 30, "kappa": 0.5,
              "grids": {"gamma": [0.1]}, "output": "out/fig1a"},
    "fig1b": {"experiment": "fig1b", "dim": 30,
              "grids": {"kappa": [0.1, 0.25, 0.5, 0.9], "gamma": [0.1]}, "output": "out/fig1b"},
    "fig2a": {"experiment": "fig2a", "dim": 30, "output": "out/fig2a"},
}


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"])
            msgs.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs)) from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(data)


def default_config(experiment: str) -> ExperimentConfig:
    return parse_config(DEFAULT_CONFIGS[experiment])


def to_toml(cfg: ExperimentConfig) -> str:
    """Render a normalised config back to TOML (enough for the shapes used here)."""
    data = cfg.normalized()
    lines, tables = [], []

    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{ " + ", ".join(f"{k} = {val(x)}" for k, x in v.items()) + " }"
        return repr(v)

    for k, v in data.items():
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {val(v)}")
    for name, table in tables:
        lines.append(f"\n[{name}]")
        for k, v in table.items():
            lines.append(f"{k} = {val(v)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# config -> domain objects


def build_profile(cfg, kappa: float, theta: float, units: UnitSystem):
    if isinstance(cfg, OptimalCfg):
        th = theta if cfg.theta is None else cfg.theta
        c = matched_amplitude(kappa, th, units) if cfg.amplitude == "matched" else float(cfg.amplitude)
        return optimal_profile(th, kappa, units, c)
    if isinstance(cfg, ConstantCfg):
        return Constant(cfg.c)
    if isinstance(cfg, DopplerCfg):
        return DopplerLorentz(cfg.c1, cfg.c2, cfg.c3)
    if isinstance(cfg, DopplerFitCfg):
        return doppler_fit(build_profile(cfg.base, kappa, theta, units))
    if isinstance(cfg, TabulatedCfg):
        return Tabulated(tuple(cfg.grid), tuple(cfg.values))
    if isinstance(cfg, ClippedCfg):
        return clip_profile(build_profile(cfg.base, kappa, theta, units), kappa)
    raise ConfigError(f"unknown profile config {cfg!r}")


def build_dissipator(cfg, theta: float, units: UnitSystem,
                     kappa: float | None = None, rate: float | None = None):
    """Domain dissipator for a config record; ``kappa``/``rate`` override sweep axes."""
    if isinstance(cfg, QOMECfg):
        return QOMESpec(Gamma=cfg.Gamma if rate is None else rate, theta=cfg.theta)
    if isinstance(cfg, IsotropicCfg):
        k = cfg.kappa if kappa is None else kappa
        prof = build_profile(cfg.profile, k, theta, units)
        return DissipatorSpec(isotropic_jumps(k, prof), overall_rate=cfg.rate if rate is None else rate)
    if isinstance(cfg, JumpsCfg):
        jumps = [JumpSpec(j.kappa, build_profile(j.profile, j.kappa, theta, units)) for j in cfg.jumps]
        return DissipatorSpec(jumps, overall_rate=cfg.rate if rate is None else rate)
    raise ConfigError(f"unknown dissipator config {cfg!r}")
