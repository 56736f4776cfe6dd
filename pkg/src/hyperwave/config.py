"""Run configuration: a TOML file validated into nested models.

Unknown keys are rejected.  Errors carry the dotted key path of the
offending entry.  ``dump_config`` writes the canonical form, which parses
back to an equal config.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError, ParseError
from .geometry import Hyperboloid
from .grid import Grid2D
from .heat import HeatConfig
from .stress import ConeGeometry
from .wave import DataSpec

CFL_MAX = 1.0 / math.sqrt(2.0)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TargetConfig(_Section):
    m: int = Field(2, ge=2)
    kappa: float = Field(-1.0, lt=0)

    def build(self):
        return Hyperboloid(self.m, self.kappa)


class GridConfig(_Section):
    n: int = 64
    extent: float = Field(1.0, gt=0)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, v):
        if v < 16 or v & (v - 1):
            raise ValueError("n must be a power of two >= 16")
        return v

    @property
    def h(self):
        return self.extent / self.n

    def build(self):
        return Grid2D(self.n, self.h)


class DataConfig(_Section):
    kind: Literal["geodesic_bump", "multi_bump", "boosted_bump"] = "multi_bump"
    amplitude: float | list[float] = 0.8
    width: float = Field(0.4, gt=0)
    power: int = Field(8, ge=2)
    centers: list[tuple[float, float]] = [(0.45, 0.5), (0.55, 0.52)]
    directions: list[list[float]] = [[1.0, 0.0], [0.0, 1.0]]
    speed: float = Field(0.5, gt=-1, lt=1)
    drift: float = Field(0.5, gt=-1, lt=1)

    def build(self):
        return DataSpec(kind=self.kind, amplitude=self.amplitude, width=self.width,
                        centers=tuple(self.centers), directions=tuple(map(tuple, self.directions)),
                        speed=self.speed, power=self.power, drift=self.drift)


class WaveConfig(_Section):
    cfl: float = 0.4
    dt: float | None = Field(None, gt=0)
    T: float = Field(0.1, ge=0)
    data: DataConfig = DataConfig()

    @field_validator("cfl")
    @classmethod
    def _cfl(cls, v):
        if not 0 < v < CFL_MAX:
            raise ValueError(f"cfl must lie in (0, {CFL_MAX:.4f}) for the explicit scheme")
        return v

    def step(self, grid: Grid2D):
        return self.dt if self.dt is not None else self.cfl * grid.h


class HeatSection(_Section):
    ds0: float | None = Field(None, gt=0)
    ratio: float = Field(1.2, gt=1, le=1.2)
    eps_rel: float = Field(1e-6, gt=0)
    eps_stop: float | None = Field(None, gt=0)
    max_levels: int = Field(400, ge=1)
    ladder_steps: list[int] = []     # wave steps to flow; empty means the middle step

    def build(self):
        return HeatConfig(ds0=self.ds0, ratio=self.ratio, eps_rel=self.eps_rel,
                          eps_stop=self.eps_stop, max_levels=self.max_levels)


class ConeConfig(_Section):
    apex_t: float
    apex_x: tuple[float, float]
    t1: float = Field(lt=0)
    lam: float = Field(8.0, gt=4)
    eps: float = Field(1.0, gt=0, le=1)

    def build(self):
        return ConeGeometry(self.apex_t, tuple(self.apex_x), self.t1, self.lam, self.eps)


class DiagnosticsConfig(_Section):
    tail_tol: float = Field(1e-4, gt=0)
    cones: list[ConeConfig] = []
    gauge_checks: bool = True
    reconstruct_map: bool = True


class OutputConfig(_Section):
    directory: str = "run"
    snapshot_every: int = Field(0, ge=0)
    ladder_dump_every: int = Field(0, ge=0)
    formats: list[Literal["json", "csv", "snapshot"]] = ["json", "csv"]


class RunConfig(_Section):
    seed: int = 0
    target: TargetConfig = TargetConfig()
    grid: GridConfig = GridConfig()
    wave: WaveConfig = WaveConfig()
    heat: HeatSection = HeatSection()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    output: OutputConfig = OutputConfig()

    def n_steps(self):
        return round(self.wave.T / self.wave.step(self.grid.build()))

    def ladder_steps(self):
        k = self.n_steps()
        return list(self.heat.ladder_steps) or [k // 2]

    def refined(self, times=1):
        """The same run with h and dt halved ``times`` times (ds0 follows h^2).

        Ladder steps are doubled so that they refer to the same wave times.
        """
        data = self.model_dump()
        for _ in range(times):
            data["grid"]["n"] *= 2
            if data["wave"]["dt"] is not None:
                data["wave"]["dt"] /= 2
            if data["heat"]["ds0"] is not None:
                data["heat"]["ds0"] /= 4
            data["heat"]["ladder_steps"] = [2 * k for k in data["heat"]["ladder_steps"]]
        return validate_config(data)


def _key_path(err):
    return ".".join(str(p) for p in err["loc"])


def _check_consistency(cfg: RunConfig):
    if len(cfg.wave.data.directions[0]) != cfg.target.m:
        raise ConfigError(f"directions need {cfg.target.m} components", key="wave.data.directions")
    if 2.0 * (cfg.wave.data.width + cfg.wave.T) > cfg.grid.extent:
        raise ConfigError("bump width plus run time does not fit the box", key="wave.T")
    dt = cfg.wave.step(cfg.grid.build())
    k = round(cfg.wave.T / dt)
    if abs(k * dt - cfg.wave.T) > 1e-9 * max(cfg.wave.T, dt):
        raise ConfigError(f"{cfg.wave.T} is not a whole number of steps of {dt:g}", key="wave.T")
    for j in cfg.heat.ladder_steps:
        if k >= 2 and not 1 <= j <= k - 1:
            raise ConfigError(f"step {j} needs neighbours inside 0..{k}", key="heat.ladder_steps")
        if k < 2 and j != 0:
            raise ConfigError("without time steps only step 0 can be flowed", key="heat.ladder_steps")


def validate_config(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], key=_key_path(first)) from None
    _check_consistency(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a TOML config file; missing entries take their defaults."""
    text = Path(path).read_text()
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(str(exc), key=str(path)) from None
    return validate_config(data)


def _drop_none(obj):
    if isinstance(obj, dict):
        return {k: _drop_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_drop_none(v) for v in obj]
    return obj


def dump_config(cfg: RunConfig) -> str:
    """Canonical TOML text of a config (unset optional entries are omitted)."""
    return tomli_w.dumps(_drop_none(cfg.model_dump()))


def config_dict(cfg: RunConfig) -> dict:
    """JSON-ready echo of the config."""
    return _drop_none(cfg.model_dump())
