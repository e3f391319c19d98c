"""
Shared meshes for the test suite. Meshing and factorisations are cached per
session; meshes are immutable so tests may share them freely.
"""

from dataclasses import dataclass

import numpy as np
import pytest

from geometry import DomainSpec, disk_polygon, generate_prefractal, unit_square
from mesh import triangulate
from models import PrefractalKind


@dataclass(frozen=True)
class DiskSetup:
    """Reference disk problem used against the Mie series"""

    radius: float = 1.0
    ball_radius: float = 3.0
    k: float = 2.0
    coarse_h: float = 0.1
    fine_h: float = 0.05
    acceptance_h: float = 0.025
    robin_impedance: complex = 1.0 + 0.5j


DISK = DiskSetup()


def disk_mesh_at(h: float, ball_radius: float = DISK.ball_radius):
    obstacle = disk_polygon(DISK.radius, h)
    return triangulate(DomainSpec(obstacle, ball_radius, DISK.k), h)


def prefractal_mesh(kind, level: int, h: float, ball_radius: float = 2.0):
    obstacle = generate_prefractal(kind, level, unit_square())
    return triangulate(DomainSpec(obstacle, ball_radius, DISK.k), h)


@pytest.fixture(scope="session")
def disk():
    return DISK


@pytest.fixture(scope="session")
def disk_mesh():
    return disk_mesh_at(DISK.coarse_h)


@pytest.fixture(scope="session")
def fine_disk_mesh():
    return disk_mesh_at(DISK.fine_h)


@pytest.fixture(scope="session")
def square_mesh():
    return triangulate(DomainSpec(unit_square(), 2.0, DISK.k), 0.1)


@pytest.fixture(scope="session")
def koch1_mesh():
    return prefractal_mesh(PrefractalKind.KOCH, 1, 0.05)


@pytest.fixture(scope="session")
def koch2_mesh():
    return prefractal_mesh(PrefractalKind.KOCH, 2, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
