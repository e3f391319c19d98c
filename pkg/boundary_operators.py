"""
Boundary operators
==================
Dense discrete K, K*, V and W over the interface DOFs, built column by
column from transmission solves against one factorisation:

    K     = 1/2 (Tr^i + Tr^e) D_k       B  -> B
    Kstar = 1/2 (dn^i + dn^e) S_k       B' -> B'
    V     = Tr S_k                      B' -> B
    W     = -dn D_k                     B  -> B'

plus the Calderon projectors, their residuals, and the boundary integral
equations for the Dirichlet, Neumann and Robin exterior problems.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla

from errors import NearResonanceError, PreconditionError
from fem import DtNForm
from layer_potentials import transmission_solver
from mesh import TransmissionMesh
from models import BoundaryEquationKind, ResidualReport, Side
from runlog import get_logger
from trace_space import CotraceVector, SteklovMatrix, TraceVector, _values

logger = get_logger("boundary_operators")

DEFAULT_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class BoundaryOperatorSet:
    K: np.ndarray
    Kstar: np.ndarray
    V: np.ndarray
    W: np.ndarray
    k: float
    mesh_id: str
    dtn_id: str
    h: Optional[float] = None
    # one-sided compositions kept for the jump relations
    trace_interior_D: np.ndarray = field(default=None, repr=False)
    trace_exterior_D: np.ndarray = field(default=None, repr=False)
    cotrace_interior_S: np.ndarray = field(default=None, repr=False)
    cotrace_exterior_S: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @cached_property
    def M(self) -> np.ndarray:
        """[[-K, V], [W, Kstar]] acting on Cauchy data (f, g)"""
        return np.block([[-self.K, self.V], [self.W, self.Kstar]])

    def jump_relation_defects(self) -> dict:
        """Max-abs defects of Tr^i D = -I/2 + K, Tr^e D = I/2 + K, dn^i S = I/2 + K*, dn^e S = -I/2 + K*"""
        half = 0.5 * np.eye(self.n)
        return {
            "trace_interior_D": float(np.max(np.abs(self.trace_interior_D - (self.K - half)))),
            "trace_exterior_D": float(np.max(np.abs(self.trace_exterior_D - (self.K + half)))),
            "cotrace_interior_S": float(np.max(np.abs(self.cotrace_interior_S - (self.Kstar + half)))),
            "cotrace_exterior_S": float(np.max(np.abs(self.cotrace_exterior_S - (self.Kstar - half)))),
        }


def build_operators(k: float, mesh: TransmissionMesh, dtn: Optional[DtNForm] = None) -> BoundaryOperatorSet:
    """2 n_b transmission solves, one factorisation"""
    solver = transmission_solver(mesh, k, dtn)
    n_b = mesh.n_interface
    identity = np.eye(n_b, dtype=complex)
    zeros = np.zeros((n_b, n_b), dtype=complex)

    U_D = solver.solve_many(-identity, zeros)
    U_S = solver.solve_many(zeros, identity)

    trace_interior_D = U_D[mesh.interface_interior]
    trace_exterior_D = U_D[mesh.interface_exterior]
    cotrace_interior_D, cotrace_exterior_D = solver.cotraces(U_D)
    cotrace_interior_S, cotrace_exterior_S = solver.cotraces(U_S)

    ops = BoundaryOperatorSet(
        K=0.5 * (trace_interior_D + trace_exterior_D),
        Kstar=0.5 * (cotrace_interior_S + cotrace_exterior_S),
        V=np.array(U_S[mesh.interface_interior]),
        W=-0.5 * (cotrace_interior_D + cotrace_exterior_D),
        k=float(k),
        mesh_id=mesh.mesh_id,
        dtn_id=solver.dtn.dtn_id,
        h=mesh.h,
        trace_interior_D=trace_interior_D,
        trace_exterior_D=trace_exterior_D,
        cotrace_interior_S=cotrace_interior_S,
        cotrace_exterior_S=cotrace_exterior_S,
    )
    logger.log(f"boundary operators at k = {k:g}: {n_b}x{n_b}, {2 * n_b} transmission solves", "SUCCESS")
    return ops


# CALDERON


def _norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2))


def _ratio(defect: np.ndarray, scale: float) -> float:
    return _norm(defect) / max(scale, 1e-300)


def calderon_projector(ops: BoundaryOperatorSet, side) -> np.ndarray:
    """C^i = I/2 + M, C^e = I/2 - M"""
    half = 0.5 * np.eye(2 * ops.n)
    if Side(side) == Side.INTERIOR:
        return half + ops.M
    return half - ops.M


def _idempotency_defect(C: np.ndarray) -> float:
    return _ratio(C @ C - C, _norm(C))


def calderon_residuals(ops: BoundaryOperatorSet) -> ResidualReport:
    """Operator 2-norm residuals, each divided by the norms of its factors"""
    K, Kstar, V, W = ops.K, ops.Kstar, ops.V, ops.W
    quarter = 0.25 * np.eye(ops.n)
    nK, nKs, nV, nW = _norm(K), _norm(Kstar), _norm(V), _norm(W)
    report = ResidualReport(
        kv_vkstar=_ratio(K @ V - V @ Kstar, nK * nV + nV * nKs),
        wk_kstarw=_ratio(W @ K - Kstar @ W, nW * nK + nKs * nW),
        k2_vw=_ratio(K @ K + V @ W - quarter, nK * nK + nV * nW + 0.25),
        kstar2_wv=_ratio(Kstar @ Kstar + W @ V - quarter, nKs * nKs + nW * nV + 0.25),
        projector_interior=_idempotency_defect(calderon_projector(ops, Side.INTERIOR)),
        projector_exterior=_idempotency_defect(calderon_projector(ops, Side.EXTERIOR)),
        k=ops.k,
        h=ops.h,
        mesh_id=ops.mesh_id,
    )
    level = "INFO" if report.all_finite else "WARNING"
    logger.log(f"Calderon residuals at h = {ops.h}: max {report.max_residual:.3e}", level)
    return report


# BOUNDARY INTEGRAL EQUATIONS


def _impedance_matrix(L, n: int) -> np.ndarray:
    if L is None:
        return np.zeros((n, n), dtype=complex)
    if hasattr(L, "matrix"):
        return np.asarray(L.matrix(n), dtype=complex)
    L = np.asarray(L, dtype=complex)
    if L.ndim == 0:
        return L * np.eye(n)
    if L.ndim == 1:
        return np.diag(L)
    return L


def boundary_equation_matrix(
    kind, ops: BoundaryOperatorSet, L=None, steklov: Optional[SteklovMatrix] = None
) -> np.ndarray:
    """
    dirichlet_slp   V g = h
    neumann_dlp    -W f = h
    robin_slp      (-I/2 + K* + S L V) g = h
    robin_dlp      (-W + S L (I/2 + K)) f = h
    """
    kind = BoundaryEquationKind(kind)
    n = ops.n
    half = 0.5 * np.eye(n)
    if kind == BoundaryEquationKind.DIRICHLET_SLP:
        return ops.V
    if kind == BoundaryEquationKind.NEUMANN_DLP:
        return -ops.W
    if L is not None and steklov is None:
        raise PreconditionError("Robin boundary equations need the Steklov matrix")
    SL = np.zeros((n, n), dtype=complex) if L is None else steklov.matrix @ _impedance_matrix(L, n)
    if kind == BoundaryEquationKind.ROBIN_SLP:
        return -half + ops.Kstar + SL @ ops.V
    return -ops.W + SL @ (half + ops.K)


def _unknown_type(kind: BoundaryEquationKind):
    if kind in (BoundaryEquationKind.DIRICHLET_SLP, BoundaryEquationKind.ROBIN_SLP):
        return CotraceVector
    return TraceVector


def _data_type(kind: BoundaryEquationKind):
    if kind == BoundaryEquationKind.DIRICHLET_SLP:
        return TraceVector
    return CotraceVector


def apply_boundary_equation(kind, x, ops: BoundaryOperatorSet, L=None, steklov: Optional[SteklovMatrix] = None):
    kind = BoundaryEquationKind(kind)
    A = boundary_equation_matrix(kind, ops, L, steklov)
    return _data_type(kind)(A @ _values(x))


def solve_boundary_equation(
    kind,
    data,
    ops: BoundaryOperatorSet,
    L=None,
    steklov: Optional[SteklovMatrix] = None,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
):
    kind = BoundaryEquationKind(kind)
    A = boundary_equation_matrix(kind, ops, L, steklov)
    rhs = np.asarray(_values(data), dtype=complex)
    if rhs.shape != (ops.n,):
        raise PreconditionError(f"boundary data must have {ops.n} entries, got {rhs.shape}")
    condition = float(np.linalg.cond(A))
    if not np.isfinite(condition) or condition > condition_limit:
        raise NearResonanceError(
            f"{kind.value} system at k = {ops.k:g} has condition number {condition:.3e} "
            f"(limit {condition_limit:.0e}); k^2 is close to an eigenvalue, "
            "try a different k or the other formulation",
            condition,
        )
    solution = sla.solve(A, rhs)
    logger.log(f"{kind.value}: solved, condition {condition:.3e}", "DEBUG")
    return _unknown_type(kind)(solution)
