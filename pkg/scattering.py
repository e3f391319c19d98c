"""
Scattering
==========
Plane-wave incidence, exterior Dirichlet / Neumann / Robin solves on the
annulus U with the DtN ring at the truncation circle, far-field extraction
and the far-field power through angular windows.

Convention: u^s(x) ~ e^{ik|x|} |x|^{-1/2} u_inf(theta) as |x| -> infinity.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from errors import DimensionMismatchError, NearResonanceError, PreconditionError
from fem import AffineConstraints, DtNForm, FactorizedSystem, cached_dtn, helmholtz_operator, region_forms
from fields import Field, PdeTag
from mesh import TransmissionMesh
from models import BoundaryConditionKind, FarFieldRoute, ImpedanceKind, Region, Side
from runlog import get_logger
from specfun import hankel1_values
from trace_space import CotraceVector, SteklovMatrix, TraceVector, _values, normal_derivative, steklov_matrix

logger = get_logger("scattering")

DEFAULT_ANGLES = 360
DEFAULT_CONDITION_LIMIT = 1e12


# INCIDENT FIELD


@dataclass(frozen=True)
class IncidentField:
    """Plane wave e^{ik d.x}, d = (cos angle, sin angle)"""

    k: float
    angle: float = 0.0
    kind: str = "plane_wave"

    def __post_init__(self):
        if self.kind != "plane_wave":
            raise PreconditionError(f"unsupported incident field {self.kind!r}; only plane waves are modelled")
        if not self.k > 0.0:
            raise PreconditionError(f"wavenumber must be positive, got {self.k}")

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    def value(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.exp(1j * self.k * (points @ self.direction))

    def trace(self, mesh: TransmissionMesh) -> TraceVector:
        return TraceVector(self.value(mesh.interface_points))

    def cotrace(self, mesh: TransmissionMesh, n_gauss: int = 4) -> CotraceVector:
        """
        c_j = int ik (d.n) e^{ik d.x} phi_j ds over the polygonal boundary,
        n the unit normal pointing out of the obstacle.
        """
        points = mesh.interface_points
        n = len(points)
        start = points
        end = np.roll(points, -1, axis=0)
        edge = end - start
        length = np.linalg.norm(edge, axis=1)
        normal = np.column_stack([edge[:, 1], -edge[:, 0]]) / length[:, None]
        t, w = leggauss(n_gauss)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        flux = 1j * self.k * (normal @ self.direction)

        c = np.zeros(n, dtype=complex)
        for ti, wi in zip(t, w):
            x = start + ti * edge
            integrand = flux * self.value(x) * length * wi
            c += (1.0 - ti) * integrand
            c[(np.arange(n) + 1) % n] += ti * integrand
        return CotraceVector(c)


# IMPEDANCE


@dataclass(frozen=True, eq=False)
class ImpedanceSpec:
    """Multiplication impedance, constant or one value per interface DOF"""

    kind: ImpedanceKind
    value: complex = 0.0
    values: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, value: complex) -> "ImpedanceSpec":
        return cls(ImpedanceKind.CONSTANT, complex(value))

    @classmethod
    def nodal(cls, values) -> "ImpedanceSpec":
        return cls(ImpedanceKind.NODAL, values=np.asarray(values, dtype=complex).copy())

    @classmethod
    def from_function(cls, mesh: TransmissionMesh, function: Callable) -> "ImpedanceSpec":
        points = mesh.interface_points
        values = np.broadcast_to(function(points[:, 0], points[:, 1]), (len(points),))
        return cls.nodal(np.array(values, dtype=complex))

    @classmethod
    def piecewise(cls, mesh: TransmissionMesh, breakpoints: Sequence[float], values: Sequence[complex]) -> "ImpedanceSpec":
        """
        Segment s covers arclength fractions [b_s, b_{s+1}) of the boundary,
        with b_0 = 0 implied and the last segment closing at 1.
        """
        breakpoints = np.asarray(breakpoints, dtype=float)
        values = np.asarray(values, dtype=complex)
        if len(values) != len(breakpoints) + 1:
            raise DimensionMismatchError(f"{len(breakpoints)} breakpoints need {len(breakpoints) + 1} values")
        if np.any(np.diff(breakpoints) <= 0.0) or np.any((breakpoints <= 0.0) | (breakpoints >= 1.0)):
            raise PreconditionError("breakpoints must increase strictly inside (0, 1)")
        fraction = mesh.interface_arclength / mesh.interface_length
        segment = np.searchsorted(breakpoints, fraction, side="right")
        return cls.nodal(values[segment])

    @property
    def is_zero(self) -> bool:
        if self.kind == ImpedanceKind.CONSTANT:
            return self.value == 0
        return not np.any(self.values)

    def nodal_values(self, n: int) -> np.ndarray:
        if self.kind == ImpedanceKind.CONSTANT:
            return np.full(n, self.value, dtype=complex)
        if len(self.values) != n:
            raise DimensionMismatchError(f"impedance has {len(self.values)} values, boundary has {n} DOFs")
        return self.values

    def matrix(self, n: int) -> np.ndarray:
        return np.diag(self.nodal_values(n))


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """
    dirichlet: Tr^e u = data (trace)
    neumann:   dn^e u = data (cotrace)
    robin:     dn^e u + S L Tr^e u = data (cotrace, intrinsic pairing)
    """

    kind: BoundaryConditionKind
    data: np.ndarray
    impedance: Optional[ImpedanceSpec] = None

    @classmethod
    def dirichlet(cls, data) -> "BoundaryCondition":
        return cls(BoundaryConditionKind.DIRICHLET, np.asarray(_values(data), dtype=complex))

    @classmethod
    def neumann(cls, data) -> "BoundaryCondition":
        return cls(BoundaryConditionKind.NEUMANN, np.asarray(_values(data), dtype=complex))

    @classmethod
    def robin(cls, impedance: ImpedanceSpec, data) -> "BoundaryCondition":
        return cls(BoundaryConditionKind.ROBIN, np.asarray(_values(data), dtype=complex), impedance)


# EXTERIOR SOLVER


def _positions(dofs: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return np.searchsorted(dofs, nodes)


class ExteriorSolver:
    """(K - k^2 M - T) on the exterior DOFs with the boundary variants factorised lazily"""

    def __init__(self, mesh: TransmissionMesh, k: float, dtn: DtNForm):
        self.mesh = mesh
        self.k = float(k)
        self.dtn = dtn
        self.pde = PdeTag.helmholtz(self.k)
        self.dofs = mesh.region_nodes(Region.EXTERIOR)
        stiffness, mass = region_forms(mesh, Region.EXTERIOR)
        A = (helmholtz_operator(stiffness, mass, self.k ** 2) - dtn.embed(mesh.n_nodes)).tocsr()
        self.A = A[self.dofs][:, self.dofs].tocsr()
        self.boundary = _positions(self.dofs, mesh.interface_exterior)
        self.ring = _positions(self.dofs, mesh.outer_ring)
        n_u, n_b = len(self.dofs), mesh.n_interface
        self.E_b = sp.csr_matrix((np.ones(n_b), (self.boundary, np.arange(n_b))), shape=(n_u, n_b))

    @cached_property
    def neumann_system(self) -> FactorizedSystem:
        return FactorizedSystem(self.A, f"exterior Neumann k={self.k:g}")

    @cached_property
    def _dirichlet(self) -> Tuple[AffineConstraints, FactorizedSystem]:
        constraints = AffineConstraints.fixed(len(self.dofs), self.boundary, np.zeros(self.mesh.n_interface))
        P = constraints.basis
        return constraints, FactorizedSystem(P.T @ self.A @ P, f"exterior Dirichlet k={self.k:g}")

    def field(self, values: np.ndarray) -> Field:
        return Field(self.mesh, Region.EXTERIOR, values, self.pde)

    def solve_neumann(self, h: np.ndarray) -> np.ndarray:
        return self.neumann_system.solve(-(self.E_b @ h))

    def solve_dirichlet(self, data: np.ndarray) -> np.ndarray:
        constraints, system = self._dirichlet
        P = constraints.basis
        offset = np.zeros(len(self.dofs), dtype=complex)
        offset[self.boundary] = data
        w = system.solve(-(P.T @ (self.A @ offset)))
        return P @ w + offset

    def robin_matrix(self, SL: np.ndarray) -> sp.csr_matrix:
        rows = np.repeat(self.boundary, len(self.boundary))
        cols = np.tile(self.boundary, len(self.boundary))
        block = sp.coo_matrix((SL.ravel(), (rows, cols)), shape=self.A.shape)
        return (self.A - block).tocsr()

    def solve_robin(self, SL: Optional[np.ndarray], h: np.ndarray) -> np.ndarray:
        if SL is None:
            return self.solve_neumann(h)
        system = FactorizedSystem(self.robin_matrix(SL), f"exterior Robin k={self.k:g}")
        return system.solve(-(self.E_b @ h))

    def solve(self, bc: BoundaryCondition, steklov: Optional[SteklovMatrix] = None) -> Field:
        n_b = self.mesh.n_interface
        if bc.data.shape != (n_b,):
            raise DimensionMismatchError(f"boundary data must have {n_b} entries, got {bc.data.shape}")
        kind = BoundaryConditionKind(bc.kind)
        if kind == BoundaryConditionKind.DIRICHLET:
            return self.field(self.solve_dirichlet(bc.data))
        if kind == BoundaryConditionKind.NEUMANN:
            return self.field(self.solve_neumann(bc.data))
        return self.field(self.solve_robin(_robin_block(bc.impedance, self.mesh, steklov), bc.data))


def _robin_block(L: Optional[ImpedanceSpec], mesh: TransmissionMesh, steklov: Optional[SteklovMatrix]):
    """S L, or None when L vanishes so the Robin solve is the Neumann solve"""
    if L is None or L.is_zero:
        return None
    steklov = steklov if steklov is not None else steklov_matrix(mesh)
    return steklov.matrix * L.nodal_values(mesh.n_interface)[None, :]


@lru_cache(maxsize=8)
def _exterior_solver(mesh: TransmissionMesh, k: float, dtn: DtNForm) -> ExteriorSolver:
    return ExteriorSolver(mesh, k, dtn)


def exterior_solver(mesh: TransmissionMesh, k: float, dtn: Optional[DtNForm] = None) -> ExteriorSolver:
    if not (np.isreal(k) and float(np.real(k)) > 0.0):
        raise PreconditionError(f"exterior solves need a real positive k, got {k}")
    k = float(np.real(k))
    dtn = dtn if dtn is not None else cached_dtn(mesh, k)
    return _exterior_solver(mesh, k, dtn)


def solve_exterior(
    bc: BoundaryCondition,
    k: float,
    mesh: TransmissionMesh,
    dtn: Optional[DtNForm] = None,
    steklov: Optional[SteklovMatrix] = None,
) -> Field:
    return exterior_solver(mesh, k, dtn).solve(bc, steklov)


def scattered_field(
    incident: IncidentField,
    kind,
    mesh: TransmissionMesh,
    L: Optional[ImpedanceSpec] = None,
    dtn: Optional[DtNForm] = None,
    steklov: Optional[SteklovMatrix] = None,
) -> Field:
    """
    dirichlet: Tr u^s = -Tr u^i
    neumann:   dn u^s = -dn u^i
    robin:     dn u^s + S L Tr u^s = -(dn u^i + S L Tr u^i)
    """
    kind = BoundaryConditionKind(kind)
    solver = exterior_solver(mesh, incident.k, dtn)
    if kind == BoundaryConditionKind.DIRICHLET:
        return solver.field(solver.solve_dirichlet(-incident.trace(mesh).values))
    h = -incident.cotrace(mesh).values
    if kind == BoundaryConditionKind.NEUMANN:
        return solver.field(solver.solve_neumann(h))
    SL = _robin_block(L, mesh, steklov)
    if SL is not None:
        h = h - SL @ incident.trace(mesh).values
    return solver.field(solver.solve_robin(SL, h))


def radiated_power(field: Field, dtn: DtNForm) -> float:
    """Im(u^H T u) on the ring: outgoing flux of the discrete field"""
    ring_values = field.at_nodes(dtn.ring)
    return float(np.imag(dtn.energy(ring_values)))


# INTERIOR EXTENSION


class InteriorExtension:
    """Interior Dirichlet solve (K - k^2 M) u = 0 with prescribed interface values"""

    def __init__(self, mesh: TransmissionMesh, k: float):
        self.mesh = mesh
        self.k = float(k)
        self.dofs = mesh.region_nodes(Region.INTERIOR)
        stiffness, mass = region_forms(mesh, Region.INTERIOR)
        self.A = helmholtz_operator(stiffness, mass, self.k ** 2)[self.dofs][:, self.dofs].tocsr()
        self.boundary = _positions(self.dofs, mesh.interface_interior)
        self.constraints = AffineConstraints.fixed(len(self.dofs), self.boundary, np.zeros(mesh.n_interface))
        P = self.constraints.basis
        self.system = FactorizedSystem(P.T @ self.A @ P, f"interior Dirichlet k={self.k:g}")

    @cached_property
    def condition(self) -> float:
        if self.system.size == 0:
            return 1.0
        return self.system.condition_estimate()

    def extend(self, trace_values: np.ndarray) -> Field:
        P = self.constraints.basis
        offset = np.zeros(len(self.dofs), dtype=complex)
        offset[self.boundary] = trace_values
        w = self.system.solve(-(P.T @ (self.A @ offset)))
        return Field(self.mesh, Region.INTERIOR, P @ w + offset, PdeTag.helmholtz(self.k))


@lru_cache(maxsize=8)
def interior_extension(mesh: TransmissionMesh, k: float) -> InteriorExtension:
    return InteriorExtension(mesh, k)


# FAR FIELD


def uniform_angles(n: int = DEFAULT_ANGLES) -> np.ndarray:
    if n < 2:
        raise PreconditionError(f"need at least 2 far-field angles, got {n}")
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True, eq=False)
class FarField:
    """Far-field amplitudes on a uniform grid over [0, 2 pi)"""

    angles: np.ndarray
    values: np.ndarray
    route: FarFieldRoute
    k: float
    geometry_id: str = ""

    def __post_init__(self):
        n = len(self.angles)
        if not np.allclose(self.angles, uniform_angles(n), rtol=0.0, atol=1e-12):
            raise PreconditionError("far-field angles must be the uniform grid 2 pi j / N")
        if np.shape(self.values) != (n,):
            raise DimensionMismatchError(f"{n} angles but {np.shape(self.values)} values")

    @property
    def n(self) -> int:
        return len(self.angles)

    @cached_property
    def _coefficients(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.n
        c = np.fft.fft(self.values) / n
        m = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        if n % 2 == 0:
            # split the Nyquist term evenly between +n/2 and -n/2
            nyquist = n // 2
            c = np.append(c, 0.5 * c[nyquist])
            c[nyquist] *= 0.5
            m = np.append(m, nyquist)
        return c, m

    def evaluate(self, theta) -> np.ndarray:
        """Trigonometric interpolation of the samples"""
        c, m = self._coefficients
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.exp(1j * np.outer(theta, m)) @ c

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "theta": self.angles,
            "re": self.values.real,
            "im": self.values.imag,
            "abs2": np.abs(self.values) ** 2,
        })

    def relative_difference(self, other: "FarField") -> float:
        if other.n != self.n:
            raise DimensionMismatchError(f"far fields on {self.n} and {other.n} angles")
        return float(np.linalg.norm(self.values - other.values) / np.linalg.norm(other.values))


def kernel_far_field_factor(k: float) -> complex:
    """Far-field pattern of (i/4) H_0(k|x - y|) without the e^{-ik theta.y} phase"""
    return 0.25 * math.sqrt(2.0 / (math.pi * k)) * np.exp(0.25j * math.pi)


def far_field_from_density(g, k: float, mesh: TransmissionMesh, angles: Optional[np.ndarray] = None) -> np.ndarray:
    """u_inf(theta) = sum_j g_j F(theta, y_j) for cotrace coefficients g"""
    angles = uniform_angles() if angles is None else np.asarray(angles, dtype=float)
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    phase = np.exp(-1j * k * (directions @ mesh.interface_points.T))
    return kernel_far_field_factor(k) * (phase @ _values(g))


def density_jump(scattered: Field, k: float, condition_limit: float = DEFAULT_CONDITION_LIMIT) -> CotraceVector:
    """[dn u] after extending u^s into the obstacle by the interior Dirichlet solve"""
    mesh = scattered.mesh
    extension = interior_extension(mesh, k)
    if extension.condition > condition_limit:
        raise NearResonanceError(
            f"interior Dirichlet problem at k = {k:g} is near resonant "
            f"(condition {extension.condition:.3e})",
            extension.condition,
        )
    exterior_trace = scattered.at_nodes(mesh.interface_exterior)
    interior = extension.extend(exterior_trace)
    return normal_derivative(interior, Side.INTERIOR) - normal_derivative(scattered, Side.EXTERIOR)


def _ring_far_field(scattered: Field, k: float, dtn: DtNForm, angles: np.ndarray) -> np.ndarray:
    """alpha_m = u_m / H_m(kR), u_inf = sqrt(2/(pi k)) e^{-i pi/4} sum alpha_m (-i)^m e^{i m theta}"""
    ring_values = scattered.at_nodes(dtn.ring)
    modes = dtn.ring_fourier(ring_values)
    hankel, _ = hankel1_values(dtn.orders, k * dtn.radius)
    alpha = modes / hankel
    weights = alpha * (-1j) ** dtn.orders
    series = np.exp(1j * np.outer(angles, dtn.orders)) @ weights
    return math.sqrt(2.0 / (math.pi * k)) * np.exp(-0.25j * math.pi) * series


def far_field(
    scattered: Field,
    k: float,
    n_angles: int = DEFAULT_ANGLES,
    route=None,
    dtn: Optional[DtNForm] = None,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> FarField:
    """
    Route density: jump of the normal derivative paired with the kernel far
    field. Route dtn_modes: Hankel read-off of the ring Fourier modes.
    Without a route, density is tried first and dtn_modes is the fallback;
    a requested density route raises when the interior extension is near
    resonant (condition above condition_limit).
    """
    mesh = scattered.mesh
    angles = uniform_angles(n_angles)
    geometry_id = mesh.obstacle.geometry_id()
    requested = None if route is None else FarFieldRoute(route)
    if requested == FarFieldRoute.ANALYTIC:
        raise PreconditionError("the analytic far field comes from the Mie series, not a mesh field")

    if requested in (None, FarFieldRoute.DENSITY):
        try:
            g = density_jump(scattered, k, condition_limit)
            values = far_field_from_density(g, k, mesh, angles)
            return FarField(angles, values, FarFieldRoute.DENSITY, float(k), geometry_id)
        except NearResonanceError as e:
            if requested is not None:
                raise
            logger.warning(f"density far-field route unavailable ({e}); using the ring modes")

    dtn = dtn if dtn is not None else cached_dtn(mesh, float(k))
    values = _ring_far_field(scattered, k, dtn, angles)
    return FarField(angles, values, FarFieldRoute.DTN_MODES, float(k), geometry_id)


# FAR-FIELD POWER


def normalise_intervals(intervals: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Validate (lo, hi) radian pairs inside [0, 2 pi]"""
    out = []
    for lo, hi in intervals:
        lo, hi = float(lo), float(hi)
        if lo < -1e-12 or hi > 2.0 * np.pi + 1e-12 or hi < lo:
            raise PreconditionError(f"angular interval ({lo}, {hi}) outside [0, 2 pi]")
        out.append((max(lo, 0.0), min(hi, 2.0 * np.pi)))
    return out


def _cumulative_power(ff: FarField, theta: float) -> float:
    """int_0^theta of the periodic piecewise-linear interpolant of |u_inf|^2"""
    n = ff.n
    step = 2.0 * np.pi / n
    p = np.abs(ff.values) ** 2
    p_next = np.roll(p, -1)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * step * (p + p_next))])
    j = min(int(theta // step), n - 1)
    t = (theta - j * step) / step
    partial = step * (p[j] * t + 0.5 * (p_next[j] - p[j]) * t * t)
    return float(cumulative[j] + partial)


def far_field_power(ff: FarField, intervals: Iterable[Tuple[float, float]]) -> float:
    """Q_Theta = int_Theta |u_inf|^2 dtheta, trapezoid rule on the sample grid"""
    intervals = normalise_intervals(intervals)
    if not intervals or all(hi - lo <= 0.0 for lo, hi in intervals):
        logger.warning("empty angular window: far-field power is 0")
        return 0.0
    total = 0.0
    for lo, hi in intervals:
        total += _cumulative_power(ff, hi) - _cumulative_power(ff, lo)
    return max(total, 0.0)


# OPTICAL THEOREM


def optical_theorem_rhs(ff: FarField, incident: IncidentField) -> float:
    """sqrt(8 pi / k) Im(e^{-i pi/4} u_inf(d))"""
    forward = ff.evaluate(incident.angle % (2.0 * np.pi))[0]
    return float(math.sqrt(8.0 * math.pi / incident.k) * np.imag(np.exp(-0.25j * math.pi) * forward))


def calibrate_optical_constant(ff: FarField, incident: IncidentField) -> float:
    """c with Q_[0, 2 pi) = c * optical_theorem_rhs, from a trusted far field"""
    total = far_field_power(ff, [(0.0, 2.0 * np.pi)])
    rhs = optical_theorem_rhs(ff, incident)
    if abs(rhs) < 1e-300:
        raise PreconditionError("forward amplitude vanishes; cannot calibrate")
    return total / rhs


def optical_theorem_residual(ff: FarField, incident: IncidentField, constant: float = 1.0) -> float:
    total = far_field_power(ff, [(0.0, 2.0 * np.pi)])
    return abs(total - constant * optical_theorem_rhs(ff, incident)) / max(total, 1e-300)
