"""
Obstacle geometry: base shapes, prefractal generations and domain checks
"""

import math

import numpy as np
import pytest

from errors import GeometryError, PreconditionError
from geometry import (
    DomainSpec,
    Polyline,
    disk_polygon,
    find_self_intersections,
    generate_prefractal,
    point_in_polygon,
    read_polyline_csv,
    regular_polygon,
    similarity_dimension,
    unit_square,
    validate_domain,
    winding_number,
    write_polyline_csv,
)
from models import PrefractalKind


def test_unit_square_basics():
    square = unit_square()
    assert square.is_counter_clockwise()
    assert square.perimeter == pytest.approx(4.0)
    assert square.signed_area == pytest.approx(1.0)
    assert square.reversed().signed_area == pytest.approx(-1.0)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_koch_segment_count_and_perimeter(level):
    curve = generate_prefractal(PrefractalKind.KOCH, level, unit_square())
    assert curve.n_segments == 4 * 4 ** level
    assert curve.perimeter == pytest.approx(4.0 * (4.0 / 3.0) ** level, rel=1e-12)
    assert curve.is_counter_clockwise()


@pytest.mark.parametrize("level", [1, 2])
def test_minkowski_segment_count_and_area(level):
    curve = generate_prefractal(PrefractalKind.MINKOWSKI, level, unit_square())
    assert curve.n_segments == 4 * 8 ** level
    # every outward square is matched by an inward one
    assert curve.signed_area == pytest.approx(1.0, rel=1e-12)
    assert curve.perimeter == pytest.approx(4.0 * 2.0 ** level, rel=1e-12)


def test_koch_first_generation_adds_outward_triangles():
    curve = generate_prefractal(PrefractalKind.KOCH, 1, unit_square())
    assert curve.signed_area == pytest.approx(1.0 + math.sqrt(3.0) / 9.0, rel=1e-12)
    assert curve.max_radius() > unit_square().max_radius() - 1e-12


def test_polygon_kind_is_identity():
    base = regular_polygon(6, 1.0)
    assert np.array_equal(generate_prefractal(PrefractalKind.POLYGON, 3, base).vertices, base.vertices)


def test_similarity_dimensions():
    assert similarity_dimension(PrefractalKind.KOCH) == pytest.approx(math.log(4.0) / math.log(3.0))
    assert similarity_dimension(PrefractalKind.MINKOWSKI) == pytest.approx(1.5)
    assert similarity_dimension(PrefractalKind.POLYGON) == 1.0


def test_level_limit_and_bad_base():
    with pytest.raises(PreconditionError):
        generate_prefractal(PrefractalKind.KOCH, 4, unit_square(), max_level=3)
    with pytest.raises(PreconditionError):
        generate_prefractal(PrefractalKind.KOCH, -1, unit_square())
    with pytest.raises(PreconditionError):
        generate_prefractal(PrefractalKind.KOCH, 1, Polyline([[0.0, 0.0], [1.0, 0.0]]))


def test_self_intersections_reported():
    bowtie = Polyline([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    hits = find_self_intersections(bowtie)
    assert (0, 2) in hits
    assert find_self_intersections(unit_square()) == []


def test_self_intersecting_generation_raises():
    # a thin base triangle folds onto itself once bumps are added
    sliver = Polyline([[-1.0, -0.05], [1.0, -0.05], [0.0, 0.05]])
    with pytest.raises(GeometryError) as info:
        generate_prefractal(PrefractalKind.MINKOWSKI, 2, sliver)
    assert info.value.segments


def test_disk_polygon_admits_mesh_size():
    for h in (0.1, 0.05, 0.025):
        polygon = disk_polygon(1.0, h)
        assert np.min(polygon.edge_lengths) >= 2.0 * h - 1e-12
        assert np.allclose(np.linalg.norm(polygon.vertices, axis=1), 1.0)


def test_point_in_polygon():
    inside = point_in_polygon([[0.0, 0.0], [0.4, -0.4], [0.6, 0.0], [2.0, 2.0]], unit_square())
    assert inside.tolist() == [True, True, False, False]


def test_winding_number_counts_overlapping_loops():
    pentagon = regular_polygon(5, 1.0, phase=math.pi / 2.0).vertices
    pentagram = Polyline(pentagon[[0, 2, 4, 1, 3]])
    points = [[0.0, 0.0], [0.0, 0.8], [0.0, -1.5]]
    assert winding_number(points, pentagram).tolist() == [2, 1, 0]
    assert point_in_polygon(points, pentagram).tolist() == [True, True, False]
    assert winding_number([[0.0, 0.0]], unit_square().reversed()).tolist() == [-1]


def test_validate_domain_reports_failures():
    good = validate_domain(DomainSpec(unit_square(), 2.0), mesh_size=0.1)
    assert good.passes

    clockwise = validate_domain(DomainSpec(unit_square().reversed(), 2.0))
    assert "orientation" in clockwise.failures

    tight = validate_domain(DomainSpec(unit_square(), 0.72), mesh_size=0.1)
    assert "containment" in tight.failures

    shifted = validate_domain(DomainSpec(unit_square().translated([2.0, 0.0]), 5.0))
    assert "origin outside obstacle" in shifted.failures


def test_ball_radius_must_be_positive():
    with pytest.raises(PreconditionError):
        DomainSpec(unit_square(), 0.0)


def test_polyline_csv(tmp_path):
    curve = generate_prefractal(PrefractalKind.KOCH, 2, unit_square())
    path = write_polyline_csv(curve, tmp_path / "koch2.csv")
    assert path.read_text().splitlines()[0] == "x,y"
    assert np.array_equal(read_polyline_csv(path).vertices, curve.vertices)
    assert read_polyline_csv(path).geometry_id() == curve.geometry_id()
