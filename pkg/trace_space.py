"""
Trace space
===========
Nodal traces on the obstacle boundary, weak normal derivatives as cotrace
coefficients against interface basis functions, the (-Delta + 1) Steklov
matrix that serves as the Gram matrix of the trace space, and the duality
pairing.
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from errors import DimensionMismatchError, PreconditionError, RegionMismatchError
from fem import FactorizedSystem, region_forms
from fields import Field
from mesh import TransmissionMesh
from models import Region, Side
from runlog import get_logger

logger = get_logger("trace_space")


class _BoundaryVector:
    """Complex values indexed by interface pairs in arclength order"""

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.array(values, dtype=complex).reshape(-1)

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={len(self)})"

    def _same(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if len(other) != len(self):
            raise DimensionMismatchError(f"dimension {len(other)} != {len(self)}")
        return other.values

    def __add__(self, other):
        return type(self)(self.values + self._same(other))

    def __sub__(self, other):
        return type(self)(self.values - self._same(other))

    def __neg__(self):
        return type(self)(-self.values)

    def __mul__(self, scalar):
        return type(self)(self.values * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @classmethod
    def zeros(cls, n: int):
        return cls(np.zeros(n, dtype=complex))

    @classmethod
    def basis(cls, n: int, j: int):
        values = np.zeros(n, dtype=complex)
        values[j] = 1.0
        return cls(values)


class TraceVector(_BoundaryVector):
    """Nodal boundary values"""


class CotraceVector(_BoundaryVector):
    """Coefficients c_j = <g, phi_j> against interface basis functions"""


def _values(vector) -> np.ndarray:
    if isinstance(vector, _BoundaryVector):
        return vector.values
    return np.asarray(vector)


# TRACES AND NORMAL DERIVATIVES


def trace(field: Field, side) -> TraceVector:
    side = Side(side)
    if not field.covers(Region(side.value)):
        raise RegionMismatchError(f"{field.region.value} field has no {side.value} trace")
    mesh = field.mesh
    nodes = mesh.interface_interior if side == Side.INTERIOR else mesh.interface_exterior
    return TraceVector(field.at_nodes(nodes))


def normal_derivative(field: Field, side, k: Optional[complex] = None) -> CotraceVector:
    """
    Green's formula residual against interface basis functions:
      interior  c_j =   a(u, phi_j) - k^2 m(u, phi_j) over Omega
      exterior  c_j = -(a(u, phi_j) - k^2 m(u, phi_j)) over U
    both with the normal pointing out of Omega.
    """
    side = Side(side)
    if field.pde is None:
        raise PreconditionError("normal derivative needs a field flagged as a PDE solution")
    if not field.covers(Region(side.value)):
        raise RegionMismatchError(f"{field.region.value} field has no {side.value} normal derivative")
    k_squared = field.pde.k_squared if k is None else k * k
    mesh = field.mesh
    stiffness, mass = region_forms(mesh, Region(side.value))
    u = field.full()
    residual = stiffness.matrix @ u - k_squared * (mass.matrix @ u)
    if side == Side.INTERIOR:
        return CotraceVector(residual[mesh.interface_interior])
    return CotraceVector(-residual[mesh.interface_exterior])


# STEKLOV / GRAM MATRICES


@dataclass(frozen=True, eq=False)
class SteklovMatrix:
    """Symmetric positive definite Gram matrix over interface DOFs"""

    matrix: np.ndarray
    label: str = "interior"

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _eigen(self) -> Tuple[np.ndarray, np.ndarray]:
        return sla.eigh(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigen[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @cached_property
    def sqrt(self) -> np.ndarray:
        w, Q = self._eigen
        return (Q * np.sqrt(w)) @ Q.T

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        w, Q = self._eigen
        return (Q / np.sqrt(w)) @ Q.T

    def __matmul__(self, other):
        if isinstance(other, TraceVector):
            return CotraceVector(self.matrix @ other.values)
        return self.matrix @ other

    def norm_squared(self, f) -> float:
        f = _values(f)
        return float(np.real(np.conj(f) @ (self.matrix @ f)))


def _schur_complement(A: sp.csr_matrix, boundary: np.ndarray, inner: np.ndarray, label: str) -> np.ndarray:
    A_bb = A[boundary][:, boundary].toarray()
    if len(inner) == 0:
        return A_bb
    A_ii = A[inner][:, inner]
    A_ib = A[inner][:, boundary].toarray()
    inner_lu = FactorizedSystem(A_ii, label)
    S = A_bb - A[boundary][:, inner] @ inner_lu.solve(A_ib)
    S = np.real(S)
    return 0.5 * (S + S.T)


@lru_cache(maxsize=8)
def steklov_matrix(mesh: TransmissionMesh) -> SteklovMatrix:
    """Interior (-Delta + 1) Schur complement over the interface DOFs"""
    stiffness, mass = region_forms(mesh, Region.INTERIOR)
    A = (stiffness.matrix + mass.matrix).tocsr()
    boundary = mesh.interface_interior
    inner = np.setdiff1d(stiffness.dofs, boundary)
    S = SteklovMatrix(_schur_complement(A, boundary, inner, "interior Steklov"), "interior")
    logger.log(f"interior Steklov matrix {S.n}x{S.n}, lambda_min {S.min_eigenvalue:.4g}")
    return S


@lru_cache(maxsize=8)
def exterior_steklov_matrix(mesh: TransmissionMesh) -> SteklovMatrix:
    """Exterior (-Delta + 1) Schur complement, zero Dirichlet data on the ring"""
    stiffness, mass = region_forms(mesh, Region.EXTERIOR)
    A = (stiffness.matrix + mass.matrix).tocsr()
    boundary = mesh.interface_exterior
    inner = np.setdiff1d(np.setdiff1d(stiffness.dofs, boundary), mesh.outer_ring)
    return SteklovMatrix(_schur_complement(A, boundary, inner, "exterior Steklov"), "exterior")


# PAIRING AND NORMS


def pairing(g: Union[CotraceVector, np.ndarray], f: Union[TraceVector, np.ndarray], conjugate: bool = True) -> complex:
    """<g, f> = sum_j g_j conj(f_j); conjugate=False gives the bilinear form"""
    g_values = _values(g)
    f_values = _values(f)
    if g_values.shape != f_values.shape:
        raise DimensionMismatchError(f"pairing dimensions {g_values.shape} and {f_values.shape}")
    return complex(np.sum(g_values * (np.conj(f_values) if conjugate else f_values)))


def trace_norm(f, steklov: SteklovMatrix) -> float:
    return float(np.sqrt(max(steklov.norm_squared(f), 0.0)))


def _generalized_range(mesh: TransmissionMesh) -> Tuple[float, float]:
    interior = steklov_matrix(mesh)
    exterior = exterior_steklov_matrix(mesh)
    w = sla.eigh(exterior.matrix, interior.matrix, eigvals_only=True)
    return float(w[0]), float(w[-1])


def trace_norm_equivalence(mesh: TransmissionMesh) -> Tuple[float, float]:
    """c_low, c_high with c_low ||f||_i <= ||f||_e <= c_high ||f||_i"""
    low, high = _generalized_range(mesh)
    return float(np.sqrt(max(low, 0.0))), float(np.sqrt(high))


def extension_norm_estimate(mesh: TransmissionMesh) -> float:
    """
    Discrete norm of the (-Delta + 1)-harmonic extension from Omega to the
    ball: ||E f||^2 = ||f||_i^2 + ||f||_e^2 maximised over ||f||_i = 1.
    """
    _, high = _generalized_range(mesh)
    return float(np.sqrt(1.0 + high))


def boundary_mass_matrix(mesh: TransmissionMesh) -> np.ndarray:
    """Arclength P1 mass on the polygonal boundary (oracle use)"""
    points = mesh.interface_points
    n = len(points)
    lengths = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    nxt = (np.arange(n) + 1) % n
    M = np.zeros((n, n))
    np.add.at(M, (np.arange(n), np.arange(n)), lengths / 3.0)
    np.add.at(M, (nxt, nxt), lengths / 3.0)
    np.add.at(M, (np.arange(n), nxt), lengths / 6.0)
    np.add.at(M, (nxt, np.arange(n)), lengths / 6.0)
    return M
