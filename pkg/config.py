"""
Run configuration
=================
JSON run files validated by a strict pydantic schema, and process-wide
settings read from the environment (and a .env file when present).
"""

import json
import math
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from geometry import DomainSpec, Polyline, disk_polygon, generate_prefractal, regular_polygon, unit_square
from mesh import TransmissionMesh, triangulate
from models import (
    BoundaryConditionKind,
    FarFieldRoute,
    ImpedanceClass,
    OptimiserSettings,
    PrefractalKind,
    RobinPairing,
)
from scattering import ImpedanceSpec, IncidentField


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryBlock(_Strict):
    kind: PrefractalKind = PrefractalKind.POLYGON
    level: int = Field(default=0, ge=0)
    base: Literal["square", "disk", "regular_polygon", "vertices"] = "square"
    radius: float = Field(default=1.0, gt=0.0, description="disk / regular polygon radius")
    n_sides: int = Field(default=6, ge=3)
    vertices: Optional[List[Tuple[float, float]]] = None
    ball_radius: float = Field(default=3.0, gt=0.0)
    max_level: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def vertices_match_base(self):
        if (self.base == "vertices") != (self.vertices is not None):
            raise ValueError("give vertices exactly when base is 'vertices'")
        return self


class DiscretisationBlock(_Strict):
    h: float = Field(default=0.05, gt=0.0)
    mode_cutoff: Optional[int] = Field(default=None, ge=1)
    n_angles: int = Field(default=360, ge=8)
    min_angle: Optional[float] = Field(default=None, gt=0.0, le=33.0)


class ImpedanceBlock(_Strict):
    re: float = 0.0
    im: float = 0.0

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)


class PhysicsBlock(_Strict):
    k: float = Field(default=2.0, gt=0.0)
    bc: BoundaryConditionKind = BoundaryConditionKind.DIRICHLET
    impedance: ImpedanceBlock = Field(default_factory=ImpedanceBlock)
    incidence_deg: float = 0.0

    @property
    def incidence(self) -> float:
        return math.radians(self.incidence_deg)


class ScatterBlock(_Strict):
    theta_intervals_deg: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 360.0)])
    route: Optional[FarFieldRoute] = None

    @field_validator("theta_intervals_deg")
    @classmethod
    def intervals_in_range(cls, v):
        for lo, hi in v:
            if not 0.0 <= lo <= hi <= 360.0:
                raise ValueError(f"interval ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 360")
        return v

    @property
    def theta_intervals(self) -> List[Tuple[float, float]]:
        """Radians, converted once"""
        return [(math.radians(lo), math.radians(hi)) for lo, hi in self.theta_intervals_deg]


class OperatorsBlock(_Strict):
    refinements: List[float] = Field(default_factory=list, description="mesh sizes for the refinement study")

    @field_validator("refinements")
    @classmethod
    def positive(cls, v):
        if any(not h > 0.0 for h in v):
            raise ValueError("refinement mesh sizes must be positive")
        return v


class OptimiserBlock(_Strict):
    impedance_class: ImpedanceClass = Field(default_factory=ImpedanceClass)
    settings: OptimiserSettings = Field(default_factory=OptimiserSettings)


class ValidationBlock(_Strict):
    trace_tolerance: float = Field(default=0.02, gt=0.0)
    far_field_tolerance: float = Field(default=0.02, gt=0.0)
    power_tolerance: float = Field(default=0.03, gt=0.0)
    spectrum_tolerance: float = Field(default=0.05, gt=0.0)
    spectrum_modes: int = Field(default=8, ge=0)
    robin_impedance: ImpedanceBlock = Field(default_factory=lambda: ImpedanceBlock(re=1.0, im=0.5))
    robin_pairing: RobinPairing = RobinPairing.INTRINSIC
    calderon_tolerance: float = Field(default=1e-8, gt=0.0)
    refinement_h: Optional[float] = Field(default=None, gt=0.0, description="coarser mesh size for the convergence check")
    refinement_factor: float = Field(default=3.0, gt=1.0)
    n_random: int = Field(default=100, ge=1, description="random vectors for the DtN sign check")


class RunConfig(_Strict):
    run_id: str = "run"
    seed: int = 0
    geometry: GeometryBlock = Field(default_factory=GeometryBlock)
    discretisation: DiscretisationBlock = Field(default_factory=DiscretisationBlock)
    physics: PhysicsBlock = Field(default_factory=PhysicsBlock)
    scatter: ScatterBlock = Field(default_factory=ScatterBlock)
    operators: OperatorsBlock = Field(default_factory=OperatorsBlock)
    optimiser: OptimiserBlock = Field(default_factory=OptimiserBlock)
    validation: ValidationBlock = Field(default_factory=ValidationBlock)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON at line {e.lineno}: {e.msg}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e.error_count()} schema error(s)\n{e}") from e


# ENVIRONMENT SETTINGS


class LabSettings(BaseModel):
    max_level: int = Field(default=7, ge=0)
    max_order: int = Field(default=200, ge=1)
    min_angle: float = Field(default=20.0, gt=0.0, le=33.0)
    condition_limit: float = Field(default=1e12, gt=1.0)
    threads: int = Field(default=1, ge=1)

    @classmethod
    def from_env(cls, env_file: Optional[Union[str, Path]] = None) -> "LabSettings":
        """HELMLAB_* variables override the defaults; .env is read first"""
        load_dotenv(env_file)
        values = {}
        for name in cls.model_fields:
            raw = os.getenv(f"HELMLAB_{name.upper()}")
            if raw is not None:
                values[name] = raw
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"invalid HELMLAB_* environment setting\n{e}") from e


# RUN OBJECTS


def build_obstacle(geometry: GeometryBlock, h: float, settings: Optional[LabSettings] = None) -> Polyline:
    """Base polygon, then the configured prefractal generation"""
    settings = settings or LabSettings()
    if geometry.base == "square":
        base = unit_square()
    elif geometry.base == "disk":
        base = disk_polygon(geometry.radius, h)
    elif geometry.base == "regular_polygon":
        base = regular_polygon(geometry.n_sides, geometry.radius)
    else:
        base = Polyline(geometry.vertices)
    max_level = geometry.max_level if geometry.max_level is not None else settings.max_level
    return generate_prefractal(geometry.kind, geometry.level, base, max_level=max_level)


def build_mesh(cfg: RunConfig, h: Optional[float] = None, settings: Optional[LabSettings] = None) -> TransmissionMesh:
    settings = settings or LabSettings()
    h = cfg.discretisation.h if h is None else float(h)
    obstacle = build_obstacle(cfg.geometry, h, settings)
    spec = DomainSpec(obstacle, cfg.geometry.ball_radius, cfg.physics.k)
    min_angle = cfg.discretisation.min_angle if cfg.discretisation.min_angle is not None else settings.min_angle
    return triangulate(spec, h, min_angle=min_angle)


def build_incident(cfg: RunConfig) -> IncidentField:
    return IncidentField(cfg.physics.k, cfg.physics.incidence)


def build_impedance(cfg: RunConfig) -> ImpedanceSpec:
    return ImpedanceSpec.constant(cfg.physics.impedance.value)
