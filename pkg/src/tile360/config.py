"""Run configuration: a validated YAML key tree plus the desk and fullscale presets.

Every section rejects unknown keys so that a typo names the offending field
instead of being ignored.  ``RunConfig.model_dump`` round-trips through
:func:`dump_config` / :func:`load_config` unchanged.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .channel import OneRingParams, default_angles
from .model import EncodingLadder, FovGeometry, GopSpec, StreamingModel, TilingGrid
from .solver_mu import CccpOptions

__all__ = [
    "ModelSection",
    "TimingSection",
    "ChannelSection",
    "TraceSection",
    "SolverSection",
    "RunConfig",
    "load_config",
    "dump_config",
    "preset",
    "BASELINES",
]

BASELINES = ("equal_power", "bier", "sdma")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Section):
    grid: tuple[int, int] = (8, 8)
    fov: tuple[int, int] = (3, 3)
    wrap_horizontal: bool = True
    ladder_kbps: tuple[float, ...] = (500.0, 3000.0, 8000.0)
    delta_kbps: float = Field(2500.0, gt=0)
    utility_scale: float = Field(0.6, gt=0)
    utility_gain: float = Field(1000.0, gt=0)
    rate_floor: float = Field(1e-6, gt=0, lt=1)

    @field_validator("grid", "fov")
    @classmethod
    def _positive_dims(cls, v):
        if min(v) < 1:
            raise ValueError("dimensions must be positive")
        return v

    @field_validator("ladder_kbps")
    @classmethod
    def _ladder(cls, v):
        if not v or v[0] <= 0 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("ladder must be positive and strictly increasing")
        return v

    @model_validator(mode="after")
    def _fov_fits(self):
        if self.fov[0] > self.grid[0] or self.fov[1] > self.grid[1]:
            raise ValueError("fov does not fit in the grid")
        return self


class TimingSection(_Section):
    gop_duration: float = Field(1.0, gt=0)
    slots: int = Field(10, ge=1)


class ChannelSection(_Section):
    antennas: int = Field(4, ge=1)
    subcarriers: int = Field(8, ge=1)
    bandwidth: float = Field(624e3, gt=0, description="Hz per subcarrier")
    noise: float = Field(1e-9, gt=0, description="W per subcarrier")
    power: float = Field(1.0, gt=0, description="W, total transmit power")
    path_gain_db: float = -65.0
    spread_deg: float = Field(10.0, gt=0, lt=180)
    spacing: float = Field(0.5, gt=0)
    angles_deg: tuple[float, ...] | None = None


class TraceSection(_Section):
    path: str | None = None
    viewers: int = Field(30, ge=1, description="synthetic population size")
    stay_probability: float = Field(0.5, ge=0, le=1)
    stream_users: tuple[int, ...] | None = None


class SolverSection(_Section):
    cccp_tolerance: float = Field(1e-4, gt=0)
    cccp_max_iter: int = Field(100, ge=1)
    multi_start: int = Field(3, ge=1)
    slot_multi_start: int = Field(1, ge=1)
    kkt_target: float = Field(1e-4, gt=0)
    rate_splitting: bool = True


class RunConfig(_Section):
    scenario: Literal["single", "multi"] = "single"
    case: Literal["pp", "ip", "up"] = "pp"
    epsilon: float = Field(0.05, gt=0, lt=1)
    users: int = Field(1, ge=1)
    gops: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)
    model: ModelSection = ModelSection()
    timing: TimingSection = TimingSection()
    channel: ChannelSection = ChannelSection()
    trace: TraceSection = TraceSection()
    solver: SolverSection = SolverSection()
    baselines: tuple[Literal["equal_power", "bier", "sdma"], ...] = ()

    @model_validator(mode="after")
    def _consistent(self):
        if self.scenario == "single" and self.users != 1:
            raise ValueError("the single-user scenario needs users = 1")
        angles = self.channel.angles_deg
        if angles is not None and len(angles) != self.users:
            raise ValueError("channel.angles_deg needs one angle per user")
        streams = self.trace.stream_users
        if streams is not None and len(streams) != self.users:
            raise ValueError("trace.stream_users needs one viewer id per user")
        return self

    # builders
    def streaming_model(self) -> StreamingModel:
        m = self.model
        return StreamingModel(
            grid=TilingGrid(*m.grid),
            ladder=EncodingLadder.from_kbps(m.ladder_kbps),
            geometry=FovGeometry(*m.fov, wrap_horizontal=m.wrap_horizontal),
            gop=GopSpec(self.timing.gop_duration, self.timing.slots, 1e3 * m.delta_kbps),
            utility_scale=m.utility_scale,
            utility_gain=m.utility_gain,
            rate_floor=m.rate_floor,
        )

    def channel_params(self) -> OneRingParams:
        c = self.channel
        angles = default_angles(self.users) if c.angles_deg is None else np.deg2rad(c.angles_deg)
        return OneRingParams(
            angles=tuple(angles), spread=float(np.deg2rad(c.spread_deg)), spacing=c.spacing,
            antennas=c.antennas, subcarriers=c.subcarriers, noise=c.noise, bandwidth=c.bandwidth,
            path_gain=(10.0 ** (c.path_gain_db / 10.0),) * self.users,
        )

    def cccp_options(self, rate_splitting: bool | None = None) -> CccpOptions:
        s = self.solver
        return CccpOptions(
            tolerance=s.cccp_tolerance, max_iter=s.cccp_max_iter, multi_start=s.multi_start,
            seed=self.seed, kkt_target=s.kkt_target,
            rate_splitting=s.rate_splitting if rate_splitting is None else rate_splitting,
        )

    def slot_options(self, rate_splitting: bool | None = None) -> CccpOptions:
        opts = self.cccp_options(rate_splitting)
        return CccpOptions(**{**opts.__dict__, "multi_start": self.solver.slot_multi_start})


def _desk() -> dict:
    return RunConfig().model_dump(mode="json")


def _fullscale() -> dict:
    cfg = _desk()
    cfg["channel"].update(subcarriers=128, bandwidth=39e3)
    cfg["timing"].update(slots=200)
    cfg["gops"] = 59
    return cfg


PRESETS = {"desk": _desk, "fullscale": _fullscale}


def preset(name: str = "desk", **overrides) -> RunConfig:
    """Named configuration with top-level overrides (sections as dicts)."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = PRESETS[name]()
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **val}
        else:
            data[key] = val
    return RunConfig.model_validate(data)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML file.  An optional top-level ``preset`` key
    names the base configuration the remaining keys override."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError("configuration root must be a mapping")
    base = data.pop("preset", None)
    if base is None:
        return RunConfig.model_validate(data)
    return preset(base, **data)


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text
