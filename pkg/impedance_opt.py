"""
Impedance optimisation
======================
Admissibility of multiplication impedances and maximisation of the
far-field power Q_Theta(L) over a compact impedance class: a coarse grid
followed by bound-constrained Nelder-Mead from the best grid point.

Every objective evaluation goes through ReducedRobinSolver, which reduces
the exterior Robin problem to an interface-sized dense solve against one
sparse factorisation of the Neumann operator.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize
from tqdm import tqdm

from errors import ImpedanceClassError, PreconditionError
from fem import DtNForm, cached_dtn
from mesh import TransmissionMesh
from models import (
    FarFieldRoute,
    FeasibilityReport,
    ImpedanceClass,
    ImpedanceClassKind,
    OptimisationResult,
    OptimisationStep,
    OptimiserSettings,
)
from runlog import get_logger
from scattering import (
    DEFAULT_ANGLES,
    FarField,
    ImpedanceSpec,
    IncidentField,
    exterior_solver,
    far_field_power,
    normalise_intervals,
    uniform_angles,
)
from specfun import hankel1_values
from trace_space import SteklovMatrix, extension_norm_estimate, steklov_matrix

logger = get_logger("impedance_opt")

DISSIPATIVITY_TOLERANCE = 1e-10


# FEASIBILITY


def feasibility(
    L: ImpedanceSpec,
    k: float,
    steklov: SteklovMatrix,
    extension_norm: float,
) -> FeasibilityReport:
    """
    Dissipativity: lambda_min of (conj(k) S L - (conj(k) S L)^H) / 2i, divided
    by lambda_max(S), must be >= -1e-10. Coercivity (surrogate):
    ||S^1/2 L S^-1/2||_2 < ||E||^-2 with ||E|| the discrete extension norm
    (extension_norm_estimate).
    """
    if not extension_norm >= 1.0:
        raise PreconditionError(f"extension norm must be at least 1, got {extension_norm}")
    n = steklov.n
    S = steklov.matrix
    values = L.nodal_values(n)
    A = np.conj(k) * S * values[None, :]
    H = (A - A.conj().T) / 2j
    H = 0.5 * (H + H.conj().T)
    margin = float(sla.eigh(H, eigvals_only=True)[0]) / steklov.max_eigenvalue

    scaled = (steklov.sqrt * values[None, :]) @ steklov.inv_sqrt
    coercivity_norm = float(np.linalg.norm(scaled, 2))
    bound = 1.0 / extension_norm ** 2
    return FeasibilityReport(
        dissipativity_margin=margin,
        dissipative=margin >= -DISSIPATIVITY_TOLERANCE,
        coercivity_norm=coercivity_norm,
        coercivity_bound=bound,
        coercive=coercivity_norm < bound,
    )


def class_impedance(cls: ImpedanceClass, params, mesh: TransmissionMesh) -> ImpedanceSpec:
    values = cls.segment_values(params)
    if cls.kind == ImpedanceClassKind.CONSTANT_BOX:
        return ImpedanceSpec.constant(values[0])
    return ImpedanceSpec.piecewise(mesh, cls.breakpoints, values)


# REDUCED ROBIN SOLVER


class ReducedRobinSolver:
    """
    Exterior Robin scattering for many impedances. With Z = A^-1 E_b,
    Y = E_b^T Z and incident trace/cotrace (t, c):

        (I - Y S L) tau = Y (S L t + c)
        u = Z S L (tau + t) + Z c
    """

    def __init__(
        self,
        mesh: TransmissionMesh,
        incident: IncidentField,
        dtn: Optional[DtNForm] = None,
        steklov: Optional[SteklovMatrix] = None,
        n_angles: int = DEFAULT_ANGLES,
    ):
        self.mesh = mesh
        self.incident = incident
        self.k = incident.k
        self.dtn = dtn if dtn is not None else cached_dtn(mesh, self.k)
        self.steklov = steklov if steklov is not None else steklov_matrix(mesh)
        self.angles = uniform_angles(n_angles)

        solver = exterior_solver(mesh, self.k, self.dtn)
        Z = solver.neumann_system.solve(solver.E_b.toarray())
        self.Y = Z[solver.boundary]
        ring_Z = Z[solver.ring]
        self.t_inc = incident.trace(mesh).values
        self.c_inc = incident.cotrace(mesh).values
        # far field of ring values through the Hankel read-off
        far = self._ring_to_far_field()
        self.far_Z = far @ ring_Z
        self.far_base = self.far_Z @ self.c_inc
        self.geometry_id = mesh.obstacle.geometry_id()
        logger.log(f"reduced Robin solver: {mesh.n_interface} interface DOFs, {len(self.angles)} angles")

    def _ring_to_far_field(self) -> np.ndarray:
        dtn = self.dtn
        hankel, _ = hankel1_values(dtn.orders, self.k * dtn.radius)
        weights = (-1j) ** dtn.orders / hankel
        modes = np.exp(1j * np.outer(self.angles, dtn.orders)) * weights[None, :]
        scale = math.sqrt(2.0 / (math.pi * self.k)) * np.exp(-0.25j * math.pi)
        return scale * (modes @ dtn.fourier)

    def far_field(self, L: ImpedanceSpec) -> FarField:
        if L.is_zero:
            values = self.far_base
        else:
            SL = self.steklov.matrix * L.nodal_values(self.mesh.n_interface)[None, :]
            n = len(self.t_inc)
            tau = np.linalg.solve(np.eye(n) - self.Y @ SL, self.Y @ (SL @ self.t_inc + self.c_inc))
            values = self.far_Z @ (SL @ (tau + self.t_inc)) + self.far_base
        return FarField(self.angles, values, FarFieldRoute.DTN_MODES, self.k, self.geometry_id)


# OBJECTIVE


@dataclass
class Evaluation:
    params: Tuple[float, ...]
    Q: Optional[float]
    feasibility: FeasibilityReport

    @property
    def accepted(self) -> bool:
        return self.Q is not None


class ImpedanceObjective:
    """Q_Theta(L(params)) with the feasibility gate, memoised per parameter tuple"""

    def __init__(
        self,
        cls: ImpedanceClass,
        solver: ReducedRobinSolver,
        intervals: Sequence[Tuple[float, float]],
    ):
        self.cls = cls
        self.solver = solver
        self.intervals = normalise_intervals(intervals)
        self._memo: Dict[Tuple[float, ...], Evaluation] = {}
        self._lock = threading.Lock()
        self.extension_norm = extension_norm_estimate(solver.mesh)

    def project(self, params) -> Tuple[float, ...]:
        lo = np.array([b[0] for b in self.cls.bounds])
        hi = np.array([b[1] for b in self.cls.bounds])
        return tuple(float(v) for v in np.clip(np.asarray(params, dtype=float), lo, hi))

    def impedance(self, params) -> ImpedanceSpec:
        return class_impedance(self.cls, params, self.solver.mesh)

    def evaluate(self, params) -> Evaluation:
        key = self.project(params)
        with self._lock:
            cached = self._memo.get(key)
        if cached is not None:
            return cached
        L = self.impedance(key)
        report = feasibility(L, self.solver.k, self.solver.steklov, self.extension_norm)
        Q = None
        if report.dissipative:
            Q = far_field_power(self.solver.far_field(L), self.intervals)
        evaluation = Evaluation(key, Q, report)
        with self._lock:
            self._memo.setdefault(key, evaluation)
        return evaluation

    def __call__(self, params) -> Optional[float]:
        return self.evaluate(params).Q

    @property
    def n_evaluations(self) -> int:
        return len(self._memo)


# OPTIMISER


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    return np.unique(np.linspace(lo, hi, n))


def grid_points(cls: ImpedanceClass, n: int) -> List[Tuple[float, ...]]:
    """
    n x n grid over (re, im). Piecewise classes share one value across all
    segments in the coarse phase.
    """
    re_axis = _axis(*cls.re_bounds, n)
    im_axis = _axis(*cls.im_bounds, n)
    points = []
    for re in re_axis:
        for im in im_axis:
            points.append(tuple([float(re), float(im)] * cls.n_segments))
    return points


def _map_ordered(function, items, threads: int, label: str, verbose: bool):
    """Order-preserving map, threaded when threads > 1"""
    progress = tqdm(total=len(items), desc=label, disable=not verbose, leave=False)
    results = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(function, items):
                results.append(result)
                progress.update(1)
    else:
        for item in items:
            results.append(function(item))
            progress.update(1)
    progress.close()
    return results


def _step(index: int, phase: str, evaluation: Evaluation) -> OptimisationStep:
    return OptimisationStep(
        index=index,
        phase=phase,
        params=list(evaluation.params),
        Q=evaluation.Q,
        dissipativity_margin=evaluation.feasibility.dissipativity_margin,
        coercivity_norm=evaluation.feasibility.coercivity_norm,
        accepted=evaluation.accepted,
    )


def _initial_simplex(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, fraction: float) -> np.ndarray:
    simplex = [x0.copy()]
    for i in range(len(x0)):
        vertex = x0.copy()
        step = fraction * (hi[i] - lo[i])
        vertex[i] = x0[i] + step if x0[i] + step <= hi[i] else x0[i] - step
        simplex.append(vertex)
    return np.array(simplex)


def optimize(
    objective: ImpedanceObjective,
    settings: Optional[OptimiserSettings] = None,
    verbose: bool = False,
) -> OptimisationResult:
    settings = settings or OptimiserSettings()
    cls = objective.cls
    trace: List[OptimisationStep] = []
    rejected: List[OptimisationStep] = []
    recorded = set()

    def record(evaluation: Evaluation, phase: str):
        if evaluation.params in recorded:
            return
        recorded.add(evaluation.params)
        step = _step(len(recorded) - 1, phase, evaluation)
        (trace if evaluation.accepted else rejected).append(step)

    # grid phase
    points = grid_points(cls, settings.grid_points)
    evaluations = _map_ordered(objective.evaluate, points, settings.threads, "grid", verbose)
    for evaluation in evaluations:
        record(evaluation, "grid")
    feasible = [e for e in evaluations if e.accepted]
    if not feasible:
        raise ImpedanceClassError(
            f"no feasible impedance among {len(points)} grid points of the {cls.kind.value} class"
        )
    grid_best = max(feasible, key=lambda e: e.Q)
    logger.log(f"grid phase: {len(points)} points, best Q = {grid_best.Q:.6g} at {grid_best.params}")

    bounds = cls.bounds
    free = [i for i, (lo, hi) in enumerate(bounds) if hi > lo]
    if not free:
        termination = "degenerate class: single point"
    else:
        x_full = np.array(grid_best.params)
        lo = np.array([bounds[i][0] for i in free])
        hi = np.array([bounds[i][1] for i in free])

        def expand(x_free):
            x = x_full.copy()
            x[free] = x_free
            return x

        def negative_Q(x_free):
            evaluation = objective.evaluate(expand(x_free))
            record(evaluation, "refine")
            return math.inf if evaluation.Q is None else -evaluation.Q

        x0 = x_full[free]
        result = minimize(
            negative_Q,
            x0,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "xatol": settings.xatol,
                "fatol": settings.fatol,
                "maxfev": settings.max_evaluations,
                "initial_simplex": _initial_simplex(x0, lo, hi, settings.initial_step),
            },
        )
        termination = str(result.message)

    best = max(trace, key=lambda step: step.Q)
    best_values = cls.segment_values(best.params)
    logger.log(f"optimiser: best Q = {best.Q:.6g} after {objective.n_evaluations} evaluations ({termination})", "SUCCESS")
    return OptimisationResult(
        impedance_class=cls.model_dump(mode="json"),
        best_params=list(best.params),
        best_impedance=[(v.real, v.imag) for v in best_values],
        best_Q=best.Q,
        grid_best_Q=grid_best.Q,
        trace=trace,
        rejected=rejected,
        termination_reason=termination,
        n_evaluations=objective.n_evaluations,
    )


def verify_optimum(objective: ImpedanceObjective, result: OptimisationResult) -> FeasibilityReport:
    """Feasibility of the reported best impedance, recomputed outside the memo"""
    L = objective.impedance(result.best_params)
    solver = objective.solver
    return feasibility(L, solver.k, solver.steklov, objective.extension_norm)


def brute_force_grid(objective: ImpedanceObjective, n: int = 41, threads: int = 1) -> Tuple[Tuple[float, ...], float, np.ndarray]:
    """Exhaustive n x n grid; returns best params, best Q and the Q table (nan where infeasible)"""
    cls = objective.cls
    points = grid_points(cls, n)
    evaluations = _map_ordered(objective.evaluate, points, threads, "brute force", False)
    table = np.array([np.nan if e.Q is None else e.Q for e in evaluations])
    feasible = [e for e in evaluations if e.accepted]
    if not feasible:
        raise ImpedanceClassError("no feasible impedance on the brute-force grid")
    best = max(feasible, key=lambda e: e.Q)
    shape = (len(_axis(*cls.re_bounds, n)), len(_axis(*cls.im_bounds, n)))
    return best.params, best.Q, table.reshape(shape)


def continuity_probe(objective: ImpedanceObjective, params, deltas: Sequence[float], direction=None) -> List[float]:
    """|Q(p) - Q(p + delta e)| / delta along a fixed unit direction e"""
    params = np.asarray(params, dtype=float)
    direction = np.ones_like(params) if direction is None else np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    base = objective(params)
    quotients = []
    for delta in deltas:
        value = objective(params + delta * direction)
        if base is None or value is None:
            quotients.append(math.nan)
        else:
            quotients.append(abs(value - base) / delta)
    return quotients


def build_objective(
    cls: ImpedanceClass,
    mesh: TransmissionMesh,
    incident: IncidentField,
    intervals: Sequence[Tuple[float, float]],
    n_angles: int = DEFAULT_ANGLES,
    dtn: Optional[DtNForm] = None,
) -> ImpedanceObjective:
    solver = ReducedRobinSolver(mesh, incident, dtn=dtn, n_angles=n_angles)
    return ImpedanceObjective(cls, solver, intervals)
