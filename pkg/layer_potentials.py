"""
Layer potentials
================
Transmission problems with prescribed jumps across the obstacle boundary,
solved on the doubled-DOF mesh. Trial fields are u = P w + E f, where P
copies each continuous DOF onto both interface copies and E places the
trace jump f on the interior copies; test functions are continuous. The
weak flux jump is then the right-hand side Q g by construction.

    single layer   S_k g : jumps (0, g)
    double layer   D_k f : jumps (-f, 0)
    Green          u = S_k g - D_k f solves jumps (f, g)
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from errors import PreconditionError
from fem import DtNForm, FactorizedSystem, cached_dtn, helmholtz_operator, region_forms
from fields import Field, PdeTag
from mesh import TransmissionMesh
from models import JumpCertificate, PdeKind, Region
from runlog import get_logger
from specfun import helmholtz_kernel
from trace_space import CotraceVector, TraceVector, _values

logger = get_logger("layer_potentials")


def _injection(rows: np.ndarray, n_rows: int) -> sp.csr_matrix:
    cols = np.arange(len(rows))
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_rows, len(rows)))


class TransmissionSolver:
    """
    Doubled-DOF system for one mesh and one equation, factorised once.

    helmholtz: A = K - k^2 M - T (DtN radiation on the ring)
    one_harmonic: A = K + M, zero Dirichlet data on the ring
    """

    def __init__(self, mesh: TransmissionMesh, pde: PdeTag, dtn: Optional[DtNForm] = None):
        self.mesh = mesh
        self.pde = pde
        n = mesh.n_nodes
        interior = mesh.interface_interior
        exterior = mesh.interface_exterior

        stiffness, mass = region_forms(mesh, Region.BOTH)
        A = helmholtz_operator(stiffness, mass, pde.k_squared)
        if pde.kind == PdeKind.HELMHOLTZ:
            if dtn is None:
                raise PreconditionError("a Helmholtz transmission solve needs a DtN form")
            A = (A - dtn.embed(n)).tocsr()
        self.A = A
        self.dtn = dtn

        # continuous DOFs: exterior copies fold onto their interior copy
        owner = np.arange(n)
        owner[exterior] = interior
        keep = np.ones(n, dtype=bool)
        keep[exterior] = False
        if pde.kind == PdeKind.ONE_HARMONIC:
            keep[mesh.outer_ring] = False
        continuous = np.nonzero(keep)[0]
        index = np.full(n, -1)
        index[continuous] = np.arange(len(continuous))
        column = index[owner]
        active = column >= 0
        self.P = sp.csr_matrix(
            (np.ones(int(np.sum(active))), (np.nonzero(active)[0], column[active])),
            shape=(n, len(continuous)),
        )
        self.E = _injection(interior, n)
        self.F = _injection(exterior, n)
        self.Q = (self.P.T @ self.E).tocsr()

        self.A_c = (self.P.T @ A @ self.P).tocsc()
        label = f"{pde.kind.value} transmission system"
        self.system = FactorizedSystem(self.A_c, label)
        self._jump_lift = (self.P.T @ (A @ self.E)).tocsr()
        logger.log(f"{label}: {self.A_c.shape[0]} continuous DOFs, {mesh.n_interface} interface pairs")

    @cached_property
    def interior_operator(self) -> sp.csr_matrix:
        stiffness, mass = region_forms(self.mesh, Region.INTERIOR)
        return helmholtz_operator(stiffness, mass, self.pde.k_squared)

    @cached_property
    def exterior_operator(self) -> sp.csr_matrix:
        stiffness, mass = region_forms(self.mesh, Region.EXTERIOR)
        return helmholtz_operator(stiffness, mass, self.pde.k_squared)

    def solve_many(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Columns of f (trace jumps) and g (flux jumps) to doubled-DOF fields"""
        f = np.asarray(f, dtype=complex)
        g = np.asarray(g, dtype=complex)
        rhs = self.Q @ g - self._jump_lift @ f
        w = self.system.solve(rhs)
        return self.P @ w + self.E @ f

    def cotraces(self, u: np.ndarray):
        """Interior and exterior cotrace coefficients of doubled-DOF fields"""
        interior = (self.interior_operator @ u)[self.mesh.interface_interior]
        exterior = -(self.exterior_operator @ u)[self.mesh.interface_exterior]
        return interior, exterior

    def solve(self, f, g) -> "TransmissionField":
        f_values = _values(f).astype(complex)
        g_values = _values(g).astype(complex)
        n_b = self.mesh.n_interface
        if f_values.shape != (n_b,) or g_values.shape != (n_b,):
            raise PreconditionError(f"jump data must have {n_b} entries")
        u = self.solve_many(f_values, g_values)
        return TransmissionField(self.mesh, self.pde, u, TraceVector(f_values), CotraceVector(g_values), self)


def _relative(defect: np.ndarray, *scales: np.ndarray) -> float:
    scale = max([float(np.linalg.norm(s)) for s in scales] + [1e-300])
    return float(np.linalg.norm(defect) / scale)


@dataclass(frozen=True, eq=False)
class TransmissionField:
    """Doubled-DOF solution with the jumps it was built from"""

    mesh: TransmissionMesh
    pde: PdeTag
    values: np.ndarray
    trace_jump: TraceVector
    flux_jump: CotraceVector
    solver: TransmissionSolver

    @property
    def interior(self) -> Field:
        return Field.from_full(self.mesh, Region.INTERIOR, self.values, self.pde)

    @property
    def exterior(self) -> Field:
        return Field.from_full(self.mesh, Region.EXTERIOR, self.values, self.pde)

    @property
    def field(self) -> Field:
        return Field(self.mesh, Region.BOTH, self.values, self.pde)

    def traces(self):
        return (
            TraceVector(self.values[self.mesh.interface_interior]),
            TraceVector(self.values[self.mesh.interface_exterior]),
        )

    def cotraces(self):
        interior, exterior = self.solver.cotraces(self.values)
        return CotraceVector(interior), CotraceVector(exterior)

    @cached_property
    def certificate(self) -> JumpCertificate:
        inner, outer = self.traces()
        c_inner, c_outer = self.cotraces()
        f = self.trace_jump.values
        g = self.flux_jump.values
        return JumpCertificate(
            trace_jump_error=_relative(inner.values - outer.values - f, f, inner.values, outer.values),
            flux_jump_error=_relative(c_inner.values - c_outer.values - g, g, c_inner.values, c_outer.values),
        )

    def jump_certificate(self) -> JumpCertificate:
        return self.certificate


# SOLVER CACHE


@lru_cache(maxsize=8)
def _helmholtz_solver(mesh: TransmissionMesh, k: float, dtn: DtNForm) -> TransmissionSolver:
    return TransmissionSolver(mesh, PdeTag.helmholtz(k), dtn)


@lru_cache(maxsize=8)
def harmonic_solver(mesh: TransmissionMesh) -> TransmissionSolver:
    return TransmissionSolver(mesh, PdeTag.one_harmonic())


def transmission_solver(mesh: TransmissionMesh, k: float, dtn: Optional[DtNForm] = None) -> TransmissionSolver:
    if not (np.isreal(k) and float(np.real(k)) > 0.0):
        raise PreconditionError(f"transmission solves need a real positive k, got {k}")
    k = float(np.real(k))
    dtn = dtn if dtn is not None else cached_dtn(mesh, k)
    if abs(dtn.k - k) > 1e-14 * k:
        raise PreconditionError(f"DtN form built for k = {dtn.k}, solve requested at k = {k}")
    return _helmholtz_solver(mesh, k, dtn)


# OPERATIONS


def solve_transmission(f, g, k: float, mesh: TransmissionMesh, dtn: Optional[DtNForm] = None) -> TransmissionField:
    """Helmholtz field with trace jump f and flux jump g, radiating at the ring"""
    return transmission_solver(mesh, k, dtn).solve(f, g)


def single_layer(g, k: float, mesh: TransmissionMesh, dtn: Optional[DtNForm] = None) -> TransmissionField:
    n_b = mesh.n_interface
    return solve_transmission(np.zeros(n_b), _values(g), k, mesh, dtn)


def double_layer(f, k: float, mesh: TransmissionMesh, dtn: Optional[DtNForm] = None) -> TransmissionField:
    n_b = mesh.n_interface
    return solve_transmission(-_values(f), np.zeros(n_b), k, mesh, dtn)


def harmonic_double_layer(f, mesh: TransmissionMesh) -> TransmissionField:
    """(-Delta + 1) field with trace jump -f, no flux jump, zero on the ring"""
    n_b = mesh.n_interface
    return harmonic_solver(mesh).solve(-_values(f), np.zeros(n_b))


def double_layer_via_lift(f, k: float, mesh: TransmissionMesh, dtn: Optional[DtNForm] = None) -> TransmissionField:
    """
    D_k f = phi + w with phi the harmonic double layer and w continuous,
      a(w, v) - k^2 m(w, v) - <T w, v> = (k^2 + 1) m(phi, v) - r(phi, v)
    where r is the ring reaction of the truncated phi problem.
    """
    solver = transmission_solver(mesh, k, dtn)
    phi = harmonic_double_layer(f, mesh).values
    stiffness, mass = region_forms(mesh, Region.BOTH)
    k_squared = solver.pde.k_squared
    load = (k_squared + 1.0) * (mass.matrix @ phi)
    reaction = np.zeros_like(load)
    ring = mesh.outer_ring
    reaction[ring] = ((stiffness.matrix + mass.matrix) @ phi)[ring]
    w = solver.system.solve(solver.P.T @ (load - reaction))
    u = phi + solver.P @ w
    n_b = mesh.n_interface
    return TransmissionField(
        mesh, solver.pde, u, TraceVector(-_values(f)), CotraceVector(np.zeros(n_b)), solver
    )


def kernel_potential(g, points, k: float, mesh: TransmissionMesh) -> np.ndarray:
    """sum_j g_j G_k(x - y_j) over interface nodes y_j"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sources = mesh.interface_points
    distance = np.linalg.norm(points[:, None, :] - sources[None, :, :], axis=2)
    return helmholtz_kernel(k, distance) @ _values(g)
