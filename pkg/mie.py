"""
Mie series
==========
Separation-of-variables solutions for plane-wave scattering by a disk of
radius a centred at the origin. With incident coefficients
b_m = i^m e^{-i m theta_d} the scattered field is

    u^s = sum_m a_m H_m(k r) e^{i m theta},   a_m = -b_m * ratio_m

    dirichlet  ratio = J / H
    neumann    ratio = J' / H'
    robin      ratio = (k J' + lam mu_m J) / (k H' + lam mu_m H)

all at ka. For Robin, mu_m = 1 pairs the impedance in L2 of the circle and
mu_m = I_m'(a) / I_m(a) pairs it through the (-Delta + 1) Steklov map.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import NearResonanceError, PreconditionError, SpecialFunctionDomainError
from models import BoundaryConditionKind, FarFieldRoute, RobinPairing
from scattering import FarField, uniform_angles
from specfun import bessel_j_values, hankel1_grid, hankel1_values, mod_bessel_ratio

SERIES_MARGIN = 30
RESONANCE_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class MieSolution:
    radius: float
    k: float
    bc: BoundaryConditionKind
    impedance: complex
    pairing: RobinPairing
    angle: float
    orders: np.ndarray
    incident: np.ndarray
    coefficients: np.ndarray

    @property
    def M(self) -> int:
        return int(np.max(self.orders))


def mie_series_order(k: float, radius: float) -> int:
    return int(math.ceil(k * radius)) + SERIES_MARGIN


def disk_steklov_eigenvalue(m, radius: float) -> np.ndarray:
    """I_m'(a) / I_m(a): the (-Delta + 1) Steklov map on the circle of radius a"""
    return mod_bessel_ratio(m, radius)


def disk_single_layer_eigenvalue(m, k: float, radius: float) -> np.ndarray:
    """(i pi a / 2) J_m(ka) H_m(ka): V_k on e^{i m theta} over the circle of radius a"""
    orders = np.atleast_1d(m)
    j, _ = bessel_j_values(orders, k * radius)
    h, _ = hankel1_values(orders, k * radius)
    return 0.5j * math.pi * radius * j * h


def _impedance_weight(orders, radius: float, pairing: RobinPairing) -> np.ndarray:
    if pairing == RobinPairing.CLASSICAL:
        return np.ones(len(orders))
    return disk_steklov_eigenvalue(orders, radius)


def mie_coefficients(
    bc,
    radius: float,
    k: float,
    impedance: complex = 0.0,
    angle: float = 0.0,
    pairing=RobinPairing.INTRINSIC,
    M: Optional[int] = None,
) -> MieSolution:
    bc = BoundaryConditionKind(bc)
    pairing = RobinPairing(pairing)
    if not radius > 0.0 or not k > 0.0:
        raise PreconditionError(f"need a > 0 and k > 0, got a = {radius}, k = {k}")
    M = mie_series_order(k, radius) if M is None else int(M)
    orders = np.arange(-M, M + 1)
    incident = (1j) ** orders * np.exp(-1j * orders * angle)
    x = k * radius
    j, jp = bessel_j_values(orders, x)
    h, hp = hankel1_values(orders, x)

    if bc == BoundaryConditionKind.DIRICHLET:
        numerator, denominator = j, h
    elif bc == BoundaryConditionKind.NEUMANN:
        numerator, denominator = jp, hp
    else:
        weight = complex(impedance) * _impedance_weight(orders, radius, pairing)
        numerator = k * jp + weight * j
        denominator = k * hp + weight * h
        small = np.abs(denominator) < RESONANCE_FLOOR
        if np.any(small):
            raise NearResonanceError(
                f"Robin Mie denominator vanishes at orders {orders[small].tolist()} for lambda = {impedance}",
                float("inf"),
            )
    coefficients = -incident * numerator / denominator
    return MieSolution(
        radius=float(radius),
        k=float(k),
        bc=bc,
        impedance=complex(impedance),
        pairing=pairing,
        angle=float(angle),
        orders=orders,
        incident=incident,
        coefficients=coefficients,
    )


def mie_evaluate(sol: MieSolution, points=None, angles=None, what: str = "near_field") -> np.ndarray:
    """
    near_field: u^s at points with |x| > a
    far_field:  u_inf at angles, same normalisation as the mesh far fields
    """
    if what == "far_field":
        angles = uniform_angles() if angles is None else np.atleast_1d(np.asarray(angles, dtype=float))
        weights = sol.coefficients * (-1j) ** sol.orders
        series = np.exp(1j * np.outer(angles, sol.orders)) @ weights
        return math.sqrt(2.0 / (math.pi * sol.k)) * np.exp(-0.25j * math.pi) * series
    if what != "near_field":
        raise PreconditionError(f"unknown Mie evaluation {what!r}")

    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(points, axis=1)
    if np.any(r <= sol.radius):
        raise SpecialFunctionDomainError("Mie near field evaluated inside or on the disk")
    theta = np.arctan2(points[:, 1], points[:, 0])
    H = hankel1_grid(sol.orders, sol.k * r)
    return np.sum(H * np.exp(1j * np.outer(theta, sol.orders)) * sol.coefficients[None, :], axis=1)


def mie_far_field(sol: MieSolution, n_angles: int = 360) -> FarField:
    angles = uniform_angles(n_angles)
    values = mie_evaluate(sol, angles=angles, what="far_field")
    return FarField(angles, values, FarFieldRoute.ANALYTIC, sol.k, f"disk-a{sol.radius:g}")


def scattering_cross_section(sol: MieSolution) -> float:
    """(4/k) sum |a_m|^2, the full-circle far-field power"""
    return float(4.0 / sol.k * np.sum(np.abs(sol.coefficients) ** 2))


def boundary_residuals(sol: MieSolution) -> float:
    """Largest relative mode-wise defect of the boundary condition for the total field"""
    x = sol.k * sol.radius
    j, jp = bessel_j_values(sol.orders, x)
    h, hp = hankel1_values(sol.orders, x)
    b, a = sol.incident, sol.coefficients
    if sol.bc == BoundaryConditionKind.DIRICHLET:
        defect = b * j + a * h
        scale = np.abs(b * j) + np.abs(a * h)
    elif sol.bc == BoundaryConditionKind.NEUMANN:
        defect = b * jp + a * hp
        scale = np.abs(b * jp) + np.abs(a * hp)
    else:
        weight = sol.impedance * _impedance_weight(sol.orders, sol.radius, sol.pairing)
        flux = sol.k * (b * jp + a * hp)
        value = weight * (b * j + a * h)
        defect = flux + value
        scale = np.abs(sol.k * b * jp) + np.abs(sol.k * a * hp) + np.abs(weight * b * j) + np.abs(weight * a * h)
    return float(np.max(np.abs(defect) / np.maximum(scale, 1e-300)))


def optical_theorem_residual(sol: MieSolution) -> float:
    """|sigma - sqrt(8 pi / k) Im(e^{-i pi/4} u_inf(d))| / sigma"""
    sigma = scattering_cross_section(sol)
    forward = mie_evaluate(sol, angles=[sol.angle], what="far_field")[0]
    rhs = math.sqrt(8.0 * math.pi / sol.k) * np.imag(np.exp(-0.25j * math.pi) * forward)
    return float(abs(sigma - rhs) / max(sigma, 1e-300))


def mie_density(sol: MieSolution, angles) -> np.ndarray:
    """
    Single-layer density g on the circle with S_k g = u^s outside the
    sound-soft disk: g_m = 2i b_m / (pi a H_m(ka)).
    """
    if sol.bc != BoundaryConditionKind.DIRICHLET:
        raise PreconditionError("the single-layer density is defined for the sound-soft disk")
    h, _ = hankel1_values(sol.orders, sol.k * sol.radius)
    density_modes = 2j * sol.incident / (math.pi * sol.radius * h)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.exp(1j * np.outer(angles, sol.orders)) @ density_modes
