# Data structures shared by the lab modules and written to report files
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

# ENUMS: the valid options for tagged fields


class PrefractalKind(str, Enum):
    """
    Generators that can replace each edge of a base polygon.
    Generators act outward on counter-clockwise polygons.
    """
    KOCH = "koch"            # 1 segment -> 4, scale 1/3
    MINKOWSKI = "minkowski"  # 1 segment -> 8, scale 1/4
    POLYGON = "polygon"      # identity, base polygon only


class Region(str, Enum):
    INTERIOR = "interior"  # obstacle Omega
    EXTERIOR = "exterior"  # annulus U = B minus closure of Omega
    BOTH = "both"


class Side(str, Enum):
    INTERIOR = "interior"
    EXTERIOR = "exterior"


class PdeKind(str, Enum):
    HELMHOLTZ = "helmholtz"        # (Delta + k^2) u = 0
    ONE_HARMONIC = "one_harmonic"  # (-Delta + 1) u = 0


class BoundaryConditionKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"


class BoundaryEquationKind(str, Enum):
    DIRICHLET_SLP = "dirichlet_slp"
    NEUMANN_DLP = "neumann_dlp"
    ROBIN_SLP = "robin_slp"
    ROBIN_DLP = "robin_dlp"


class FarFieldRoute(str, Enum):
    DENSITY = "density"      # jump of the normal derivative paired with the kernel far field
    DTN_MODES = "dtn_modes"  # Fourier read-off on the outer ring
    ANALYTIC = "analytic"    # Mie series


class ImpedanceKind(str, Enum):
    CONSTANT = "constant"
    NODAL = "nodal"


class ImpedanceClassKind(str, Enum):
    CONSTANT_BOX = "constant_box"
    PIECEWISE_CONSTANT = "piecewise_constant"


class RobinPairing(str, Enum):
    """How the impedance is paired with test traces on a disk"""
    INTRINSIC = "intrinsic"  # through the (-Delta+1) Steklov Riesz map
    CLASSICAL = "classical"  # boundary L2 integral


# REPORTS


class ValidationReport(BaseModel):
    """
    Outcome of checking an obstacle + ball against the domain invariants.
    Failures are listed by name; nothing is raised.
    """
    counter_clockwise: bool
    clearance: float = Field(description="R minus the largest vertex radius")
    required_clearance: float = Field(default=0.0, ge=0.0)
    min_edge_length: float = Field(ge=0.0)
    self_intersections: List[Tuple[int, int]] = Field(default_factory=list)
    origin_inside: bool = True
    failures: List[str] = Field(default_factory=list)

    @property
    def passes(self) -> bool:
        return not self.failures

    def to_summary(self) -> Dict[str, Any]:
        return {
            "passes": self.passes,
            "counter_clockwise": self.counter_clockwise,
            "clearance": self.clearance,
            "required_clearance": self.required_clearance,
            "min_edge_length": self.min_edge_length,
            "self_intersections": [list(pair) for pair in self.self_intersections],
            "origin_inside": self.origin_inside,
            "failures": list(self.failures),
        }


class MetricsReport(BaseModel):
    n_nodes: int = Field(ge=0)
    n_triangles_interior: int = Field(ge=0)
    n_triangles_exterior: int = Field(ge=0)
    n_nodes_interior: int = Field(ge=0)
    n_nodes_exterior: int = Field(ge=0)
    n_interface: int = Field(ge=0, description="interface DOF pairs")
    n_ring: int = Field(ge=0, description="nodes on the truncation circle")
    min_angle: float = Field(description="degrees")
    max_angle: float = Field(description="degrees")
    area_interior: float
    area_exterior: float
    h: float = Field(gt=0.0)
    mesh_id: str = ""

    @property
    def n_triangles(self) -> int:
        return self.n_triangles_interior + self.n_triangles_exterior


class JumpCertificate(BaseModel):
    """Relative residuals of the imposed trace and flux jumps"""
    trace_jump_error: float = Field(ge=0.0)
    flux_jump_error: float = Field(ge=0.0)

    def holds(self, tolerance: float = 1e-10) -> bool:
        return self.trace_jump_error <= tolerance and self.flux_jump_error <= tolerance


class ResidualReport(BaseModel):
    """
    Normalised Calderon residuals:
      KV - VK*, WK - K*W, K^2 + VW - I/4, (K*)^2 + WV - I/4,
    plus idempotency defects of both projectors.
    """
    kv_vkstar: float
    wk_kstarw: float
    k2_vw: float
    kstar2_wv: float
    projector_interior: float
    projector_exterior: float
    k: float
    h: Optional[float] = None
    mesh_id: str = ""

    @property
    def relations(self) -> List[float]:
        return [self.kv_vkstar, self.wk_kstarw, self.k2_vw, self.kstar2_wv]

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(value) for value in self.relations)

    @property
    def max_residual(self) -> float:
        return max(self.relations)


class FeasibilityReport(BaseModel):
    """
    Admissibility of an impedance. The dissipativity margin is the operative
    criterion; the coercivity check is a discrete surrogate and only reported.
    """
    dissipativity_margin: float
    dissipative: bool
    coercivity_norm: float = Field(ge=0.0)
    coercivity_bound: float = Field(ge=0.0)
    coercive: bool
    coercivity_label: str = "surrogate"

    @property
    def passes(self) -> bool:
        return self.dissipative


class OptimisationStep(BaseModel):
    index: int = Field(ge=0)
    phase: str  # "grid" or "refine"
    params: List[float]
    Q: Optional[float] = None
    dissipativity_margin: float
    coercivity_norm: float
    accepted: bool


class OptimisationResult(BaseModel):
    impedance_class: Dict[str, Any]
    best_params: List[float]
    best_impedance: List[Tuple[float, float]] = Field(
        description="(re, im) per segment"
    )
    best_Q: float = Field(ge=0.0)
    grid_best_Q: float = Field(ge=0.0)
    trace: List[OptimisationStep] = Field(default_factory=list, description="accepted steps")
    rejected: List[OptimisationStep] = Field(
        default_factory=list, description="steps that failed the dissipativity margin"
    )
    termination_reason: str
    n_evaluations: int = Field(ge=0)

    @model_validator(mode="after")
    def steps_are_consistent(self):
        if not all(step.accepted for step in self.trace):
            raise ValueError("the trace holds accepted steps only")
        if any(step.accepted for step in self.rejected):
            raise ValueError("rejected steps must not be marked accepted")
        if [step.index for step in self.steps] != list(range(len(self.steps))):
            raise ValueError("step indices must be consecutive from 0")
        return self

    @property
    def steps(self) -> List[OptimisationStep]:
        """Accepted and rejected steps in evaluation order"""
        return sorted(self.trace + self.rejected, key=lambda step: step.index)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class PowerReport(BaseModel):
    Q: float = Field(ge=0.0)
    theta_intervals: List[Tuple[float, float]] = Field(description="degrees")
    route: FarFieldRoute
    k: float
    geometry_id: str


class ValidationCheck(BaseModel):
    name: str
    measured: float
    tolerance: float
    passed: bool

    def __str__(self) -> str:
        symbol = "✓" if self.passed else "✗"
        return f"{symbol} {self.name:45} | measured: {self.measured:.3e} | tolerance: {self.tolerance:.1e}"


class ValidationSummary(BaseModel):
    checks: List[ValidationCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "n_checks": len(self.checks),
            "n_failed": sum(not check.passed for check in self.checks),
            "checks": [check.model_dump() for check in self.checks],
        }


# SEARCH CLASSES


class ImpedanceClass(BaseModel):
    """
    Compact impedance search set. constant_box searches one complex value;
    piecewise_constant gives every arclength segment its own value in the
    same box. Breakpoints are arclength fractions strictly inside (0, 1).
    """
    kind: ImpedanceClassKind = ImpedanceClassKind.CONSTANT_BOX
    re_bounds: Tuple[float, float] = (-0.5, 0.5)
    im_bounds: Tuple[float, float] = (0.0, 2.0)
    breakpoints: List[float] = Field(default_factory=list)

    @field_validator("re_bounds", "im_bounds")
    @classmethod
    def bounds_are_ordered(cls, v):
        if not (math.isfinite(v[0]) and math.isfinite(v[1])) or v[0] > v[1]:
            raise ValueError(f"bounds must be finite with lo <= hi, got {v}")
        return v

    @field_validator("breakpoints")
    @classmethod
    def breakpoints_are_increasing(cls, v):
        if any(not 0.0 < b < 1.0 for b in v) or any(b >= c for b, c in zip(v, v[1:])):
            raise ValueError("breakpoints must increase strictly inside (0, 1)")
        return v

    @property
    def n_segments(self) -> int:
        if self.kind == ImpedanceClassKind.CONSTANT_BOX:
            return 1
        return len(self.breakpoints) + 1

    @property
    def dimension(self) -> int:
        return 2 * self.n_segments

    @property
    def bounds(self) -> List[Tuple[float, float]]:
        """(lo, hi) per parameter, ordered re_0, im_0, re_1, im_1, ..."""
        return [self.re_bounds, self.im_bounds] * self.n_segments

    @property
    def is_degenerate(self) -> bool:
        return self.re_bounds[0] == self.re_bounds[1] and self.im_bounds[0] == self.im_bounds[1]

    def segment_values(self, params) -> List[complex]:
        params = list(params)
        if len(params) != self.dimension:
            raise ValueError(f"{self.kind.value} class takes {self.dimension} parameters, got {len(params)}")
        return [complex(params[2 * s], params[2 * s + 1]) for s in range(self.n_segments)]


class OptimiserSettings(BaseModel):
    grid_points: int = Field(default=9, ge=1, description="grid points per real parameter")
    xatol: float = Field(default=1e-4, gt=0.0)
    fatol: float = Field(default=1e-8, gt=0.0)
    max_evaluations: int = Field(default=400, ge=1)
    initial_step: float = Field(default=0.1, gt=0.0, le=1.0, description="simplex size as a fraction of the box")
    threads: int = Field(default=1, ge=1)
