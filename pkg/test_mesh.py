"""
Transmission meshes: quality, doubled interface, ring and provenance
"""

import math

import numpy as np
import pytest

from conftest import DISK, disk_mesh_at
from errors import PreconditionError
from geometry import DomainSpec, unit_square
from mesh import EXTERIOR_TAG, INTERIOR_TAG, mesh_metrics, ring_polygon_defect, triangle_angles, triangulate
from models import Region


def test_quality_and_counts(disk_mesh):
    metrics = mesh_metrics(disk_mesh)
    assert metrics.min_angle >= 20.0 - 1e-9
    assert metrics.n_ring == math.ceil(2.0 * math.pi * DISK.ball_radius / DISK.coarse_h - 1e-9)
    assert metrics.n_interface == disk_mesh.n_interface
    assert metrics.n_triangles_interior > 0 and metrics.n_triangles_exterior > 0


def test_region_areas_match_the_polygons(disk_mesh):
    metrics = mesh_metrics(disk_mesh)
    obstacle_area = disk_mesh.obstacle.signed_area
    n = metrics.n_ring
    ring_area = 0.5 * n * DISK.ball_radius ** 2 * math.sin(2.0 * math.pi / n)
    assert metrics.area_interior == pytest.approx(obstacle_area, rel=1e-12)
    assert metrics.area_exterior == pytest.approx(ring_area - obstacle_area, rel=1e-12)


def test_interface_is_doubled(disk_mesh):
    inner = disk_mesh.interface_interior
    outer = disk_mesh.interface_exterior
    assert len(np.intersect1d(inner, outer)) == 0
    assert np.array_equal(disk_mesh.nodes[inner], disk_mesh.nodes[outer])

    interior_tris = disk_mesh.region_triangles(Region.INTERIOR)
    exterior_tris = disk_mesh.region_triangles(Region.EXTERIOR)
    assert not np.any(np.isin(interior_tris, outer))
    assert not np.any(np.isin(exterior_tris, inner))
    assert set(np.unique(disk_mesh.regions)) == {INTERIOR_TAG, EXTERIOR_TAG}


def test_interface_follows_the_obstacle(disk_mesh):
    points = disk_mesh.interface_points
    assert np.allclose(points[0], disk_mesh.obstacle.vertices[0])
    assert disk_mesh.interface_length == pytest.approx(disk_mesh.obstacle.perimeter, rel=1e-12)
    # counter-clockwise walk
    x, y = points[:, 0], points[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0.0
    assert disk_mesh.interface_arclength[0] == 0.0
    assert np.all(np.diff(disk_mesh.interface_arclength) > 0.0)


def test_ring_nodes_on_the_circle(disk_mesh):
    radii = np.linalg.norm(disk_mesh.nodes[disk_mesh.outer_ring], axis=1)
    assert np.allclose(radii, DISK.ball_radius, rtol=1e-12)
    assert np.all(np.isin(disk_mesh.outer_ring, disk_mesh.region_nodes(Region.EXTERIOR)))


def test_triangles_are_counter_clockwise(square_mesh):
    nodes, tris = square_mesh.nodes, square_mesh.triangles
    a, b, c = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    assert np.all(cross > 0.0)
    angles = triangle_angles(nodes, tris)
    assert np.allclose(np.sum(angles, axis=1), 180.0)


def test_mesh_is_deterministic(disk_mesh):
    again = disk_mesh_at(DISK.coarse_h)
    assert again.mesh_id == disk_mesh.mesh_id
    assert np.array_equal(again.nodes, disk_mesh.nodes)


def test_mesh_size_preconditions():
    with pytest.raises(PreconditionError):
        triangulate(DomainSpec(unit_square(), 2.0), 0.6)
    with pytest.raises(PreconditionError):
        triangulate(DomainSpec(unit_square(), 2.0), -0.1)
    with pytest.raises(PreconditionError):
        triangulate(DomainSpec(unit_square(), 0.75), 0.1)


def test_koch_mesh_interface(koch2_mesh):
    # 64 segments of length 1/9, each split into at least 3 pieces at h = 0.05
    assert koch2_mesh.n_interface >= 64 * 3
    assert koch2_mesh.interface_length == pytest.approx(4.0 * (4.0 / 3.0) ** 2, rel=1e-12)


def test_ring_polygon_defect():
    assert 0.0 < ring_polygon_defect(100) < 1e-3
    assert ring_polygon_defect(400) < ring_polygon_defect(100)
