"""
Discrete boundary operators: jump relations, Calderon identities, the disk
single-layer spectrum, and the boundary integral equations against the
direct FEM exterior solves
"""

import numpy as np
import pytest

from boundary_operators import (
    apply_boundary_equation,
    boundary_equation_matrix,
    build_operators,
    calderon_projector,
    calderon_residuals,
    solve_boundary_equation,
)
from conftest import DISK, disk_mesh_at
from errors import NearResonanceError, PreconditionError
from fem import cached_dtn
from layer_potentials import double_layer, single_layer
from mie import disk_single_layer_eigenvalue
from models import BoundaryEquationKind, Side
from scattering import BoundaryCondition, ImpedanceSpec, solve_exterior
from trace_space import CotraceVector, TraceVector, boundary_mass_matrix, steklov_matrix

K = DISK.k


@pytest.fixture(scope="module")
def ops(disk_mesh):
    return build_operators(K, disk_mesh, cached_dtn(disk_mesh, K))


def _relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_jump_relations(ops):
    defects = ops.jump_relation_defects()
    assert set(defects) == {"trace_interior_D", "trace_exterior_D", "cotrace_interior_S", "cotrace_exterior_S"}
    assert max(defects.values()) <= 1e-9


def test_reciprocity(ops):
    scale = np.linalg.norm(ops.K)
    assert np.max(np.abs(ops.Kstar - ops.K.T)) <= 1e-10 * scale
    assert np.max(np.abs(ops.V - ops.V.T)) <= 1e-10 * np.linalg.norm(ops.V)
    assert np.max(np.abs(ops.W - ops.W.T)) <= 1e-10 * np.linalg.norm(ops.W)


def test_bilinear_adjointness(ops, rng):
    n = ops.n
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lhs = g @ (ops.K @ f)
    rhs = (ops.Kstar @ g) @ f
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_calderon_identities(ops):
    report = calderon_residuals(ops)
    assert report.all_finite
    assert report.max_residual <= 1e-9
    assert report.projector_interior <= 1e-9
    assert report.projector_exterior <= 1e-9
    assert report.mesh_id == ops.mesh_id


def test_projectors_are_complementary(ops):
    total = calderon_projector(ops, Side.INTERIOR) + calderon_projector(ops, Side.EXTERIOR)
    assert np.allclose(total, np.eye(2 * ops.n), rtol=0.0, atol=1e-12)


def _single_layer_spectrum_error(mesh, modes):
    ops = build_operators(K, mesh, cached_dtn(mesh, K))
    points = mesh.interface_points
    theta = np.arctan2(points[:, 1], points[:, 0])
    mass = boundary_mass_matrix(mesh)
    worst = 0.0
    for m in range(-modes, modes + 1):
        mode = np.exp(1j * m * theta)
        discrete = np.vdot(mode, ops.V @ (mass @ mode)) / np.vdot(mode, mode)
        exact = disk_single_layer_eigenvalue(m, K, DISK.radius)[0]
        worst = max(worst, abs(discrete - exact) / abs(exact))
    return worst


def test_single_layer_spectrum_on_the_disk(fine_disk_mesh):
    assert _single_layer_spectrum_error(fine_disk_mesh, 4) <= 0.05


@pytest.mark.slow
def test_single_layer_spectrum_acceptance():
    assert _single_layer_spectrum_error(disk_mesh_at(DISK.acceptance_h), 8) <= 0.05


def test_dirichlet_slp_matches_the_exterior_solve(ops, disk_mesh, rng):
    h = TraceVector(rng.standard_normal(ops.n) + 1j * rng.standard_normal(ops.n))
    g = solve_boundary_equation(BoundaryEquationKind.DIRICHLET_SLP, h, ops)
    assert isinstance(g, CotraceVector)
    via_bie = single_layer(g, K, disk_mesh).exterior.values
    direct = solve_exterior(BoundaryCondition.dirichlet(h), K, disk_mesh).values
    assert _relative(via_bie, direct) <= 1e-8


def test_neumann_dlp_matches_the_exterior_solve(ops, disk_mesh, rng):
    h = CotraceVector(rng.standard_normal(ops.n) + 1j * rng.standard_normal(ops.n))
    f = solve_boundary_equation(BoundaryEquationKind.NEUMANN_DLP, h, ops)
    assert isinstance(f, TraceVector)
    via_bie = double_layer(f, K, disk_mesh).exterior.values
    direct = solve_exterior(BoundaryCondition.neumann(h), K, disk_mesh).values
    assert _relative(via_bie, direct) <= 1e-8


def test_robin_slp_matches_the_exterior_solve(ops, disk_mesh, rng):
    L = ImpedanceSpec.constant(DISK.robin_impedance)
    steklov = steklov_matrix(disk_mesh)
    h = CotraceVector(rng.standard_normal(ops.n) + 1j * rng.standard_normal(ops.n))
    g = solve_boundary_equation(BoundaryEquationKind.ROBIN_SLP, h, ops, L=L, steklov=steklov)
    via_bie = single_layer(g, K, disk_mesh).exterior.values
    direct = solve_exterior(BoundaryCondition.robin(L, h), K, disk_mesh, steklov=steklov).values
    assert _relative(via_bie, direct) <= 1e-8


def test_robin_dlp_residual(ops, disk_mesh, rng):
    L = ImpedanceSpec.constant(DISK.robin_impedance)
    steklov = steklov_matrix(disk_mesh)
    h = CotraceVector(rng.standard_normal(ops.n) + 1j * rng.standard_normal(ops.n))
    f = solve_boundary_equation(BoundaryEquationKind.ROBIN_DLP, h, ops, L=L, steklov=steklov)
    image = apply_boundary_equation(BoundaryEquationKind.ROBIN_DLP, f, ops, L=L, steklov=steklov)
    assert isinstance(image, CotraceVector)
    assert _relative(image.values, h.values) <= 1e-10


def test_robin_without_impedance_is_the_plain_jump_operator(ops):
    A = boundary_equation_matrix(BoundaryEquationKind.ROBIN_SLP, ops)
    assert np.allclose(A, ops.Kstar - 0.5 * np.eye(ops.n))


def test_boundary_equation_errors(ops):
    h = np.ones(ops.n)
    with pytest.raises(NearResonanceError):
        solve_boundary_equation(BoundaryEquationKind.DIRICHLET_SLP, h, ops, condition_limit=1.0)
    with pytest.raises(PreconditionError):
        boundary_equation_matrix(BoundaryEquationKind.ROBIN_SLP, ops, L=ImpedanceSpec.constant(1.0))
    with pytest.raises(PreconditionError):
        solve_boundary_equation(BoundaryEquationKind.DIRICHLET_SLP, np.ones(ops.n + 1), ops)
