"""Run configuration files and environment defaults.

A run is described by one YAML file (``schema_version: 1``). Unknown keys are
rejected at every level.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import constants
from .errors import ConfigError
from .geometry import GeneratorSpec, Point
from .regimes import Disk, SweepConfig

PointPair = tuple[float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GraphBlock(_Strict):
    family: Literal["square", "triangular", "rhombic-tracks"]
    h: float = Field(gt=0)
    extent: int = Field(default=10, ge=1)
    spacing: Literal["spacing", "circumdiameter"] = "spacing"
    row_angles: list[float] = Field(default_factory=list)
    col_angles: list[float] = Field(default_factory=list)
    angle_margin: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _angles_for_tracks(self) -> "GraphBlock":
        if self.family == "rhombic-tracks" and (not self.row_angles or not self.col_angles):
            raise ValueError("rhombic-tracks needs non-empty row_angles and col_angles")
        return self

    def to_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            family=self.family,
            h=self.h,
            extent=self.extent,
            spacing=self.spacing,
            row_angles=tuple(self.row_angles),
            col_angles=tuple(self.col_angles),
            angle_margin=self.angle_margin,
        )


class RegionBlock(_Strict):
    type: Literal["disk"]
    center: PointPair
    radius: float = Field(gt=0)

    def to_region(self) -> Disk:
        return Disk(center=Point.of(self.center), radius=self.radius)


class SweepBlock(_Strict):
    regime: Literal["euclidean", "graph", "ldp"]
    x: PointPair
    y: PointPair = (0.0, 0.0)
    t: float = Field(gt=0)
    beta: float = Field(gt=0)
    h_sequence: list[float] = Field(min_length=1)
    rel_tol: float = Field(default=constants.DEFAULT_ENTRY_REL_TOL, gt=0)
    threshold: float | None = Field(default=None, gt=0)
    region: RegionBlock | None = None
    horizon: float | None = Field(default=None, gt=0)

    @field_validator("beta")
    @classmethod
    def _not_critical(cls, beta: float) -> float:
        if beta == 1:
            raise ValueError(
                "beta = 1 is the critical case, which neither the Euclidean nor the graph "
                "regime covers; use beta < 1 or beta > 1"
            )
        return beta

    @model_validator(mode="after")
    def _regime_consistency(self) -> "SweepBlock":
        if self.regime in ("euclidean", "ldp") and not self.beta < 1:
            raise ValueError(f"the {self.regime} regime needs beta < 1")
        if self.regime == "graph" and not self.beta > 1:
            raise ValueError("the graph regime needs beta > 1")
        if self.regime == "ldp" and self.region is None:
            raise ValueError("the ldp regime needs a region block")
        if any(b >= a for a, b in zip(self.h_sequence, self.h_sequence[1:])):
            raise ValueError("h_sequence must be strictly decreasing")
        return self


class WalkBlock(_Strict):
    samples: int = Field(ge=1000)
    horizon: float = Field(gt=0)
    start: PointPair = (0.0, 0.0)


class RunConfig(_Strict):
    schema_version: Literal[1]
    kind: Literal["generate", "sweep"]
    graph: GraphBlock
    sweep: SweepBlock | None = None
    walk: WalkBlock | None = None
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _kind_blocks(self) -> "RunConfig":
        if self.kind == "sweep" and self.sweep is None:
            raise ValueError("kind 'sweep' needs a sweep block")
        return self

    def sweep_config(self, *, workers: int = 1, rel_tol: float | None = None) -> SweepConfig:
        if self.sweep is None:
            raise ConfigError("This configuration has no sweep block.")
        s = self.sweep
        return SweepConfig(
            regime=s.regime,
            graph=self.graph.to_spec(),
            x=Point.of(s.x),
            y=Point.of(s.y),
            t=s.t,
            beta=s.beta,
            h_sequence=tuple(s.h_sequence),
            rel_tol=s.rel_tol if rel_tol is None else rel_tol,
            threshold=float("inf") if s.threshold is None else s.threshold,
            region=None if s.region is None else s.region.to_region(),
            horizon=s.horizon,
            workers=workers,
        )


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source} must contain a YAML mapping at the top level.")
    version = data.get("schema_version")
    if version != constants.CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"{source}: unsupported schema_version {version!r}; "
            f"this build reads version {constants.CONFIG_SCHEMA_VERSION}."
        )
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"Invalid configuration in {source}: {problems}", details={"errors": exc.error_count()}) from exc


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    return parse_config(read_config_text(path), source=str(path))


def read_config_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read configuration file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Shipped configurations
# ---------------------------------------------------------------------------


def shipped_config_names() -> tuple[str, ...]:
    return constants.SHIPPED_CONFIGS


@lru_cache(maxsize=None)
def shipped_config_text(name: str) -> str:
    if name not in constants.SHIPPED_CONFIGS:
        raise ConfigError(f"Unknown shipped config {name!r}. Available: {', '.join(constants.SHIPPED_CONFIGS)}.")
    configured = os.getenv(constants.ENV_CONFIGS_DIR)
    if configured:
        path = Path(configured) / name
        if not path.is_file():
            raise ConfigError(
                f"{name} is missing from {constants.ENV_CONFIGS_DIR}={configured}. "
                "Point the variable at a directory holding the shipped configs or unset it."
            )
        return path.read_text(encoding="utf-8")
    resource = resources.files("isoradial_heat").joinpath("configs", name)
    if not resource.is_file():
        raise ConfigError(
            f"{name} is missing from the bundled package resources (isoradial_heat/configs). "
            f"Reinstall isoradial-heat or set {constants.ENV_CONFIGS_DIR}."
        )
    return resource.read_text(encoding="utf-8")


def load_shipped_config(name: str) -> RunConfig:
    return parse_config(shipped_config_text(name), source=name)


# ---------------------------------------------------------------------------
# Environment defaults
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuntimeSettings:
    threads: int = 1
    tol: float | None = None
    log_level: str = "WARNING"


def settings_from_env() -> RuntimeSettings:
    threads = os.getenv(constants.ENV_THREADS)
    tol = os.getenv(constants.ENV_TOL)
    try:
        return RuntimeSettings(
            threads=max(1, int(threads)) if threads else 1,
            tol=float(tol) if tol else None,
            log_level=(os.getenv(constants.ENV_LOG_LEVEL) or "WARNING").upper(),
        )
    except ValueError as exc:
        raise ConfigError(
            f"Invalid environment setting: {exc}. Check {constants.ENV_THREADS} and {constants.ENV_TOL}."
        ) from exc
