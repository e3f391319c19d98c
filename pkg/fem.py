"""
P1 finite elements
==================
Stiffness and mass assembly on mesh regions, the Fourier-mode
Dirichlet-to-Neumann form on the truncation circle, and a direct sparse
solver with affine DOF constraints eliminated by substitution.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from errors import AssemblyError, DimensionMismatchError, PreconditionError, SolverError
from mesh import TransmissionMesh, triangle_areas
from models import Region
from runlog import get_logger
from specfun import hankel1_values

logger = get_logger("fem")


@dataclass(frozen=True, eq=False)
class SesquiForm:
    """Sparse matrix over all mesh nodes; rows/cols outside dofs are empty"""

    matrix: sp.csr_matrix
    symmetry: str
    region: Region
    dofs: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other


# ASSEMBLY


def element_geometry(nodes: np.ndarray, tris: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Triangle areas and (n_tri, 3, 2) barycentric gradients"""
    areas = triangle_areas(nodes, tris)
    scale = float(np.max(np.abs(nodes))) if len(nodes) else 1.0
    bad = areas <= 1e-14 * scale * scale
    if np.any(bad):
        first = int(np.nonzero(bad)[0][0])
        raise AssemblyError(f"degenerate triangle {first}: {nodes[tris[first]].tolist()}")
    x = nodes[tris, 0]
    y = nodes[tris, 1]
    grads = np.empty(tris.shape + (2,))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = y[:, j] - y[:, k]
        grads[:, i, 1] = x[:, k] - x[:, j]
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def _scatter(tris: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh: TransmissionMesh, region) -> Tuple[SesquiForm, SesquiForm]:
    """Exact P1 stiffness int grad u . grad v and mass int u v on one region"""
    region = Region(region)
    tris = mesh.region_triangles(region)
    areas, grads = element_geometry(mesh.nodes, tris)
    stiffness_local = areas[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    mass_local = areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None, :, :]
    n = mesh.n_nodes
    dofs = mesh.region_nodes(region)
    stiffness = SesquiForm(_scatter(tris, stiffness_local, n), "symmetric", region, dofs)
    mass = SesquiForm(_scatter(tris, mass_local, n), "symmetric", region, dofs)
    logger.log(f"assembled {region.value}: {len(tris)} triangles", "DEBUG")
    return stiffness, mass


@lru_cache(maxsize=16)
def region_forms(mesh: TransmissionMesh, region) -> Tuple[SesquiForm, SesquiForm]:
    """Cached assemble(); meshes are immutable"""
    return assemble(mesh, Region(region))


def helmholtz_operator(stiffness: SesquiForm, mass: SesquiForm, k_squared: complex) -> sp.csr_matrix:
    """K - k^2 M (k^2 = -1 gives the (-Delta + 1) operator)"""
    if k_squared == 0:
        return stiffness.matrix.copy()
    return (stiffness.matrix - k_squared * mass.matrix).tocsr()


# DIRICHLET-TO-NEUMANN RING


def default_mode_cutoff(k: float, radius: float) -> int:
    return max(16, int(math.ceil(k * radius)) + 16)


def dtn_coefficients(k: float, radius: float, orders) -> np.ndarray:
    """d_m = k H_m'(kR) / H_m(kR)"""
    value, derivative = hankel1_values(orders, k * radius)
    return k * derivative / value


def _phi0(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z, series near 0"""
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    term = np.ones_like(zs)
    total = np.zeros_like(zs)
    for n in range(25):
        total += term / (n + 1)
        term = term * zs / (n + 1)
    out[small] = total
    zl = z[~small]
    out[~small] = (np.exp(zl) - 1.0) / zl
    return out


def _phi1(z: np.ndarray) -> np.ndarray:
    """int_0^1 t e^{zt} dt, series near 0"""
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    term = np.ones_like(zs)
    total = np.zeros_like(zs)
    for n in range(25):
        total += term / (n + 2)
        term = term * zs / (n + 1)
    out[small] = total
    zl = z[~small]
    out[~small] = (np.exp(zl) * (zl - 1.0) + 1.0) / (zl * zl)
    return out


def ring_fourier_matrix(theta: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """
    B[m, j] such that (B u)_m = (1/2pi) int u(t) e^{-imt} dt exactly for u
    linear in angle between consecutive ring nodes.
    """
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    span = np.diff(np.concatenate([theta, [theta[0] + 2.0 * np.pi]]))
    s = -1j * np.asarray(orders, dtype=float)
    z = s[:, None] * span[None, :]
    start = np.exp(s[:, None] * theta[None, :]) * span[None, :]
    upper = start * _phi1(z)
    lower = start * _phi0(z) - upper
    B = lower + np.roll(upper, 1, axis=1)
    return B / (2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class DtNForm:
    """
    Mode-truncated DtN map on the ring, T = 2 pi R B^H diag(d) B.
    The variational contribution is -T; T is complex symmetric.
    """

    k: float
    radius: float
    orders: np.ndarray
    coefficients: np.ndarray
    ring: np.ndarray
    fourier: np.ndarray
    matrix: np.ndarray = field(repr=False)

    @property
    def mode_cutoff(self) -> int:
        return int(np.max(self.orders))

    @cached_property
    def dtn_id(self) -> str:
        return f"dtn-k{self.k:.6g}-R{self.radius:.6g}-M{self.mode_cutoff}-n{len(self.ring)}"

    def ring_fourier(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients u_m of ring nodal values"""
        return self.fourier @ values

    def energy(self, values: np.ndarray) -> complex:
        values = np.asarray(values)
        return complex(np.conj(values) @ (self.matrix @ values))

    def embed(self, n_nodes: int) -> sp.csr_matrix:
        """T placed on the ring rows/cols of an n_nodes matrix"""
        rows = np.repeat(self.ring, len(self.ring))
        cols = np.tile(self.ring, len(self.ring))
        return sp.coo_matrix((self.matrix.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()


def assemble_dtn(mesh: TransmissionMesh, k: float, M: Optional[int] = None) -> DtNForm:
    if len(mesh.outer_ring) == 0:
        raise PreconditionError("mesh has no outer ring")
    if not (np.isreal(k) and float(np.real(k)) > 0.0):
        raise PreconditionError(f"DtN needs a real positive wavenumber, got {k}")
    k = float(np.real(k))
    R = mesh.ball_radius
    M = default_mode_cutoff(k, R) if M is None else int(M)
    if M < 1:
        raise PreconditionError(f"mode cutoff must be at least 1, got {M}")

    orders = np.arange(-M, M + 1)
    coefficients = dtn_coefficients(k, R, orders)
    points = mesh.nodes[mesh.outer_ring]
    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * np.pi)
    B = ring_fourier_matrix(theta, orders)
    T = 2.0 * np.pi * R * (B.conj().T @ (coefficients[:, None] * B))
    T = 0.5 * (T + T.T)
    logger.log(f"DtN ring: {len(points)} nodes, modes |m| <= {M}, kR = {k * R:.4g}")
    return DtNForm(k=k, radius=R, orders=orders, coefficients=coefficients,
                   ring=mesh.outer_ring.copy(), fourier=B, matrix=T)


@lru_cache(maxsize=16)
def cached_dtn(mesh: TransmissionMesh, k: float, M: Optional[int] = None) -> DtNForm:
    return assemble_dtn(mesh, k, M)


# LINEAR SOLVES


@dataclass
class AffineConstraints:
    """u = basis @ w + offset; offset may be a matrix for many right sides"""

    basis: sp.csr_matrix
    offset: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, n: int) -> "AffineConstraints":
        return cls(sp.identity(n, format="csr"))

    @classmethod
    def fixed(cls, n: int, dofs, values) -> "AffineConstraints":
        """Pin dofs to values, keep the rest free"""
        dofs = np.asarray(dofs, dtype=np.int64)
        free = np.setdiff1d(np.arange(n), dofs)
        basis = sp.csr_matrix((np.ones(len(free)), (free, np.arange(len(free)))), shape=(n, len(free)))
        values = np.asarray(values)
        offset = np.zeros((n,) + values.shape[1:], dtype=np.result_type(values, float))
        offset[dofs] = values
        return cls(basis, offset)


@dataclass
class LinearSolution:
    values: np.ndarray
    relative_residual: float


class FactorizedSystem:
    """One sparse LU factorisation reused for many right-hand sides"""

    def __init__(self, matrix, label: str = "system"):
        self.label = label
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"{label}: matrix is {matrix.shape}, not square")
        self.matrix = matrix
        try:
            self._lu = splu(matrix)
        except RuntimeError as e:
            raise SolverError(
                f"{label}: factorisation failed ({e}); the truncated problem is singular, "
                "likely an eigenvalue of the discrete operator"
            ) from e
        self.is_complex = np.iscomplexobj(matrix.data)
        logger.log(f"{label}: factorised {matrix.shape[0]} unknowns", "DEBUG")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.size:
            raise DimensionMismatchError(f"{self.label}: rhs has {rhs.shape[0]} rows, expected {self.size}")
        if rhs.size == 0:
            return np.zeros(rhs.shape, dtype=complex)
        if not self.is_complex and np.iscomplexobj(rhs):
            return self._lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag))
        if self.is_complex:
            rhs = rhs.astype(complex)
        return self._lu.solve(np.ascontiguousarray(rhs))

    def residual(self, solution: np.ndarray, rhs: np.ndarray) -> float:
        scale = np.linalg.norm(rhs)
        defect = np.linalg.norm(self.matrix @ solution - rhs)
        return float(defect / scale) if scale > 0.0 else float(defect)

    def condition_estimate(self) -> float:
        """1-norm condition number, inverse norm estimated from the factors"""
        n = self.size
        dtype = complex if self.is_complex else float

        def forward(x):
            return self.solve(np.asarray(x).reshape(n, -1)).reshape(np.shape(x))

        def adjoint(x):
            x = np.asarray(x).reshape(n, -1)
            if self.is_complex:
                return self._lu.solve(np.ascontiguousarray(x.astype(complex)), trans="H").reshape(n, -1).squeeze()
            return (self._lu.solve(np.ascontiguousarray(x.real), trans="T")
                    + 1j * self._lu.solve(np.ascontiguousarray(x.imag), trans="T")).squeeze()

        inverse = LinearOperator((n, n), matvec=forward, rmatvec=adjoint, dtype=dtype)
        return float(spla.norm(self.matrix, 1) * onenormest(inverse))


def solve_linear(system, rhs, constraints: Optional[AffineConstraints] = None) -> LinearSolution:
    """
    Direct solve of system u = rhs under u = P w + u0, tested against the
    columns of P: (P^T A P) w = P^T (rhs - A u0).
    """
    A = sp.csr_matrix(system)
    rhs = np.asarray(rhs)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.shape[0]:
        raise DimensionMismatchError(f"system {A.shape} does not match rhs {rhs.shape}")
    constraints = constraints or AffineConstraints.identity(A.shape[0])
    P = constraints.basis
    reduced_rhs = rhs if constraints.offset is None else rhs - A @ constraints.offset
    reduced_rhs = P.T @ reduced_rhs
    reduced = (P.T @ A @ P).tocsc()
    system_lu = FactorizedSystem(reduced, "constrained system")
    w = system_lu.solve(reduced_rhs)
    residual = system_lu.residual(w, reduced_rhs)
    values = P @ w
    if constraints.offset is not None:
        values = values + constraints.offset
    if residual > 1e-10:
        logger.warning(f"relative residual {residual:.2e} above 1e-10")
    return LinearSolution(values=values, relative_residual=residual)
