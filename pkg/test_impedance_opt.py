"""
Impedance feasibility, the reduced Robin solver and the optimiser
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import DISK
from errors import ImpedanceClassError, PreconditionError
from fem import cached_dtn
from impedance_opt import (
    ImpedanceObjective,
    ReducedRobinSolver,
    brute_force_grid,
    build_objective,
    class_impedance,
    continuity_probe,
    feasibility,
    grid_points,
    optimize,
    verify_optimum,
)
from models import BoundaryConditionKind, FarFieldRoute, ImpedanceClass, ImpedanceClassKind, OptimiserSettings
from scattering import ImpedanceSpec, IncidentField, far_field, scattered_field
from trace_space import extension_norm_estimate, steklov_matrix

K = DISK.k
INCIDENT = IncidentField(K, 0.0)
WINDOW = [(math.pi / 6.0, math.pi / 3.0)]
BOX = ImpedanceClass(re_bounds=(-0.5, 0.5), im_bounds=(0.0, 2.0))


@pytest.fixture(scope="module")
def reduced(disk_mesh):
    return ReducedRobinSolver(disk_mesh, INCIDENT, dtn=cached_dtn(disk_mesh, K))


def _objective(solver, cls=BOX):
    return ImpedanceObjective(cls, solver, WINDOW)


def test_feasibility_of_constant_impedances(disk_mesh):
    S = steklov_matrix(disk_mesh)
    norm = extension_norm_estimate(disk_mesh)
    ratio = S.min_eigenvalue / S.max_eigenvalue

    absorbing = feasibility(ImpedanceSpec.constant(0.3 + 0.8j), K, S, norm)
    assert absorbing.dissipative
    assert absorbing.dissipativity_margin == pytest.approx(K * 0.8 * ratio, rel=1e-8)
    assert absorbing.coercivity_norm == pytest.approx(abs(0.3 + 0.8j), rel=1e-10)

    lossless = feasibility(ImpedanceSpec.constant(0.7), K, S, norm)
    assert lossless.dissipative
    assert abs(lossless.dissipativity_margin) <= 1e-12

    active = feasibility(ImpedanceSpec.constant(0.1 - 0.5j), K, S, norm)
    assert not active.dissipative
    assert active.dissipativity_margin < 0.0


def test_coercivity_bound_uses_the_extension_norm(disk_mesh):
    S = steklov_matrix(disk_mesh)
    norm = extension_norm_estimate(disk_mesh)
    assert norm > 1.0
    report = feasibility(ImpedanceSpec.constant(1e-3j), K, S, norm)
    assert report.coercivity_bound == pytest.approx(1.0 / norm ** 2)
    assert report.coercive

    # above ||E||^-2 but below 1: not coercive under the surrogate
    between = 0.5 * (1.0 + 1.0 / norm ** 2)
    report = feasibility(ImpedanceSpec.constant(between * 1j), K, S, norm)
    assert report.coercivity_norm == pytest.approx(between, rel=1e-10)
    assert report.dissipative and not report.coercive

    with pytest.raises(PreconditionError):
        feasibility(ImpedanceSpec.constant(1e-3j), K, S, 0.5)


@pytest.mark.parametrize("value", [0.0, 0.4 + 1.2j, -0.3 + 0.2j])
def test_reduced_solver_matches_the_full_robin_route(disk_mesh, reduced, value):
    L = ImpedanceSpec.constant(value)
    dtn = cached_dtn(disk_mesh, K)
    us = scattered_field(INCIDENT, BoundaryConditionKind.ROBIN, disk_mesh, L=L, dtn=dtn)
    full = far_field(us, K, route=FarFieldRoute.DTN_MODES, dtn=dtn)
    fast = reduced.far_field(L)
    assert fast.route == FarFieldRoute.DTN_MODES
    assert np.linalg.norm(fast.values - full.values) <= 1e-8 * np.linalg.norm(full.values)


def test_reduced_solver_with_a_piecewise_impedance(disk_mesh, reduced):
    L = ImpedanceSpec.piecewise(disk_mesh, [0.3, 0.6], [0.2 + 1j, -0.1 + 0.5j, 0.4j])
    dtn = cached_dtn(disk_mesh, K)
    us = scattered_field(INCIDENT, BoundaryConditionKind.ROBIN, disk_mesh, L=L, dtn=dtn)
    full = far_field(us, K, route=FarFieldRoute.DTN_MODES, dtn=dtn)
    assert np.linalg.norm(reduced.far_field(L).values - full.values) <= 1e-8 * np.linalg.norm(full.values)


def test_objective_is_memoised_and_projected(reduced):
    objective = _objective(reduced)
    first = objective.evaluate((0.1, 0.5))
    assert objective.evaluate([0.1, 0.5]) is first
    assert objective.n_evaluations == 1
    assert objective.evaluate((3.0, 0.5)).params == (0.5, 0.5)
    assert objective((0.1, 0.5)) == first.Q
    assert first.accepted and first.Q > 0.0


def test_infeasible_points_have_no_power(reduced):
    cls = ImpedanceClass(re_bounds=(-0.5, 0.5), im_bounds=(-1.0, 1.0))
    evaluation = _objective(reduced, cls).evaluate((0.0, -1.0))
    assert evaluation.Q is None
    assert not evaluation.accepted
    assert not evaluation.feasibility.dissipative


def test_degenerate_class_is_a_single_point(reduced):
    cls = ImpedanceClass(re_bounds=(0.2, 0.2), im_bounds=(1.0, 1.0))
    assert cls.is_degenerate
    result = optimize(_objective(reduced, cls), OptimiserSettings(grid_points=5))
    assert result.termination_reason == "degenerate class: single point"
    assert result.best_params == [0.2, 1.0]
    assert result.n_evaluations == 1
    assert len(result.trace) == 1


def test_infeasible_class_raises(reduced):
    cls = ImpedanceClass(re_bounds=(-0.5, 0.5), im_bounds=(-2.0, -1.0))
    with pytest.raises(ImpedanceClassError):
        optimize(_objective(reduced, cls), OptimiserSettings(grid_points=3))


def test_optimiser_improves_on_its_grid(reduced):
    settings = OptimiserSettings(grid_points=5, max_evaluations=60)
    result = optimize(_objective(reduced), settings)
    assert result.best_Q >= result.grid_best_Q
    assert all(step.accepted for step in result.trace)
    assert not result.rejected
    assert [step.index for step in result.steps] == list(range(len(result.steps)))
    assert {step.phase for step in result.trace} <= {"grid", "refine"}
    lo_re, hi_re = BOX.re_bounds
    assert lo_re <= result.best_params[0] <= hi_re
    _, brute_Q, table = brute_force_grid(_objective(reduced), n=5)
    assert table.shape == (5, 5)
    assert result.grid_best_Q == pytest.approx(brute_Q, rel=1e-14)


def test_rejected_steps_are_recorded_apart_from_the_trace(reduced):
    cls = ImpedanceClass(re_bounds=(-0.5, 0.5), im_bounds=(-1.0, 2.0))
    objective = _objective(reduced, cls)
    result = optimize(objective, OptimiserSettings(grid_points=3, max_evaluations=20))

    assert result.rejected
    for step in result.rejected:
        assert not step.accepted
        assert step.Q is None
        assert step.dissipativity_margin < -1e-10
    assert all(step.accepted for step in result.trace)
    assert [step.index for step in result.steps] == list(range(len(result.steps)))
    assert result.n_evaluations == len(result.steps)

    optimum = verify_optimum(objective, result)
    assert optimum.dissipative
    assert result.best_params[1] >= 0.0


def test_optimiser_is_deterministic_across_threads(reduced):
    settings = OptimiserSettings(grid_points=4, max_evaluations=30)
    serial = optimize(_objective(reduced), settings).to_dict()
    threaded = optimize(_objective(reduced), settings.model_copy(update={"threads": 2})).to_dict()
    assert serial == threaded


def test_piecewise_grid_shares_values(disk_mesh):
    cls = ImpedanceClass(kind=ImpedanceClassKind.PIECEWISE_CONSTANT, breakpoints=[0.25, 0.5, 0.75])
    assert cls.n_segments == 4 and cls.dimension == 8
    points = grid_points(cls, 3)
    assert len(points) == 9
    for point in points:
        assert point == point[:2] * 4
    L = class_impedance(cls, points[4], disk_mesh)
    assert np.all(L.nodal_values(disk_mesh.n_interface) == complex(*points[4][:2]))


def test_impedance_class_validation():
    with pytest.raises(ValidationError):
        ImpedanceClass(re_bounds=(1.0, 0.0))
    with pytest.raises(ValidationError):
        ImpedanceClass(im_bounds=(0.0, math.inf))
    with pytest.raises(ValidationError):
        ImpedanceClass(kind=ImpedanceClassKind.PIECEWISE_CONSTANT, breakpoints=[0.5, 0.3])
    with pytest.raises(ValueError):
        BOX.segment_values([1.0])


def test_continuity_probe(reduced):
    objective = _objective(reduced, ImpedanceClass(re_bounds=(-0.5, 0.5), im_bounds=(-1.0, 2.0)))
    quotients = continuity_probe(objective, (0.1, 0.7), [1e-2, 1e-3, 1e-4])
    assert all(math.isfinite(q) for q in quotients)
    assert quotients[2] <= 2.0 * quotients[1] + 1e-6
    # stepping into the active half-plane leaves the feasible set
    edge = continuity_probe(objective, (0.1, 0.0), [1e-3], direction=(0.0, -1.0))
    assert math.isnan(edge[0])


@pytest.mark.slow
def test_optimiser_against_the_brute_force_grid(fine_disk_mesh):
    objective = build_objective(BOX, fine_disk_mesh, INCIDENT, WINDOW)
    result = optimize(objective, OptimiserSettings(grid_points=9))
    _, brute_Q, _ = brute_force_grid(
        build_objective(BOX, fine_disk_mesh, INCIDENT, WINDOW), n=41
    )
    assert result.best_Q >= brute_Q * (1.0 - 0.01)
