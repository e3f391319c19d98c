"""
Obstacle geometry
=================
Closed polylines for the obstacle boundary, prefractal (Koch / Minkowski)
generations built outward on polygon edges, and validation of an obstacle
inside the truncation ball.
"""

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from errors import GeometryError, PreconditionError
from models import PrefractalKind, ValidationReport
from runlog import get_logger

DEFAULT_MAX_LEVEL = 7

# Generator points (t along the edge, s along the outward normal), edge scaled
# to unit length. The edge end point is the next edge's start and is omitted.
KOCH_GENERATOR = np.array([
    [0.0, 0.0],
    [1.0 / 3.0, 0.0],
    [0.5, math.sqrt(3.0) / 6.0],
    [2.0 / 3.0, 0.0],
])
MINKOWSKI_GENERATOR = np.array([
    [0.0, 0.0],
    [0.25, 0.0],
    [0.25, 0.25],
    [0.5, 0.25],
    [0.5, 0.0],
    [0.5, -0.25],
    [0.75, -0.25],
    [0.75, 0.0],
])

GENERATORS = {
    PrefractalKind.KOCH: (KOCH_GENERATOR, 3.0),
    PrefractalKind.MINKOWSKI: (MINKOWSKI_GENERATOR, 4.0),
}

logger = get_logger("geometry")


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered 2D vertices; closed polylines repeat no vertex at the end"""

    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 2)
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def n_segments(self) -> int:
        n = len(self.vertices)
        return n if self.closed else max(n - 1, 0)

    @property
    def segments(self) -> np.ndarray:
        """(n_segments, 2, 2) array of segment end points"""
        start = self.vertices
        end = np.roll(self.vertices, -1, axis=0)
        pairs = np.stack([start, end], axis=1)
        return pairs[: self.n_segments]

    @property
    def edge_lengths(self) -> np.ndarray:
        seg = self.segments
        return np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.edge_lengths))

    @property
    def signed_area(self) -> float:
        """Shoelace area, positive for counter-clockwise orientation"""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_counter_clockwise(self) -> bool:
        return self.signed_area > 0.0

    def translated(self, offset) -> "Polyline":
        return Polyline(self.vertices + np.asarray(offset, dtype=float), self.closed)

    def reversed(self) -> "Polyline":
        return Polyline(self.vertices[::-1].copy(), self.closed)

    def max_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def geometry_id(self) -> str:
        digest = hashlib.sha1(np.ascontiguousarray(self.vertices).tobytes())
        return digest.hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Obstacle boundary, truncation ball radius and wavenumber"""

    obstacle: Polyline
    ball_radius: float
    wavenumber: complex = 1.0

    def __post_init__(self):
        if not self.ball_radius > 0.0:
            raise PreconditionError(f"ball radius must be positive, got {self.ball_radius}")


# BASE SHAPES


def unit_square() -> Polyline:
    """Unit square centred on the origin, counter-clockwise"""
    return Polyline([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


def regular_polygon(n: int, radius: float = 1.0, phase: float = 0.0) -> Polyline:
    if n < 3:
        raise PreconditionError(f"a polygon needs at least 3 vertices, got {n}")
    angles = phase + 2.0 * np.pi * np.arange(n) / n
    return Polyline(radius * np.column_stack([np.cos(angles), np.sin(angles)]))


def disk_polygon(radius: float, h: float) -> Polyline:
    """
    Inscribed regular polygon approximating a disk, with the most vertices
    whose edge length still admits mesh size h (edge >= 2h).
    """
    ratio = min(h / radius, 1.0)
    n = max(int(math.floor(math.pi / math.asin(ratio) + 1e-12)), 3)
    return regular_polygon(n, radius)


# PREFRACTALS


def similarity_dimension(kind: PrefractalKind) -> float:
    kind = PrefractalKind(kind)
    if kind == PrefractalKind.POLYGON:
        return 1.0
    generator, scale = GENERATORS[kind]
    return math.log(len(generator)) / math.log(scale)


def _refine_once(vertices: np.ndarray, generator: np.ndarray, orientation: float) -> np.ndarray:
    start = vertices
    edge = np.roll(vertices, -1, axis=0) - start
    normal = orientation * np.column_stack([edge[:, 1], -edge[:, 0]])
    t = generator[:, 0][None, :, None]
    s = generator[:, 1][None, :, None]
    points = start[:, None, :] + t * edge[:, None, :] + s * normal[:, None, :]
    return points.reshape(-1, 2)


def generate_prefractal(
    kind: Union[PrefractalKind, str],
    level: int,
    base: Polyline,
    max_level: Optional[int] = None,
    check_intersections: bool = True,
) -> Polyline:
    """
    Replace every edge of base by the level-fold generator, outward.

    Segment count is E * g**level with g = 4 (koch) or 8 (minkowski); the
    polygon kind returns the base unchanged.
    """
    kind = PrefractalKind(kind)
    max_level = DEFAULT_MAX_LEVEL if max_level is None else max_level
    if level < 0:
        raise PreconditionError(f"level must be non-negative, got {level}")
    if level > max_level:
        raise PreconditionError(f"level {level} exceeds the configured maximum {max_level}")
    if not base.closed or len(base) < 3:
        raise PreconditionError("base must be a closed polyline with at least 3 vertices")
    if np.any(base.edge_lengths == 0.0):
        raise PreconditionError("base has repeated consecutive vertices")

    if kind == PrefractalKind.POLYGON or level == 0:
        result = Polyline(base.vertices.copy())
    else:
        generator, _ = GENERATORS[kind]
        orientation = 1.0 if base.is_counter_clockwise() else -1.0
        vertices = base.vertices
        for _ in range(level):
            vertices = _refine_once(vertices, generator, orientation)
        result = Polyline(vertices)

    logger.log(f"{kind.value} level {level}: {result.n_segments} segments")

    if check_intersections:
        hits = find_self_intersections(result)
        if hits:
            shown = ", ".join(f"({i}, {j})" for i, j in hits[:10])
            raise GeometryError(
                f"{kind.value} level {level} self-intersects at segments {shown}", hits
            )
    return result


# INTERSECTIONS


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def _on_segment(a, b, p, eps):
    return (
        (np.minimum(a[..., 0], b[..., 0]) - eps <= p[..., 0])
        & (p[..., 0] <= np.maximum(a[..., 0], b[..., 0]) + eps)
        & (np.minimum(a[..., 1], b[..., 1]) - eps <= p[..., 1])
        & (p[..., 1] <= np.maximum(a[..., 1], b[..., 1]) + eps)
    )


def find_self_intersections(polyline: Polyline) -> List[Tuple[int, int]]:
    """
    Pairs (i, j), i < j, of intersecting non-adjacent segments, plus adjacent
    pairs that fold back onto each other. Sort-and-sweep on x with a
    bounding-box filter.
    """
    seg = polyline.segments
    n = len(seg)
    if n < 3:
        return []
    scale = float(np.max(np.abs(polyline.vertices))) or 1.0
    eps = 1e-12 * scale
    area_eps = eps * scale

    hits = set()

    # folded adjacent segments
    first = seg[:, 1] - seg[:, 0]
    nxt = np.roll(first, -1, axis=0)
    cross = first[:, 0] * nxt[:, 1] - first[:, 1] * nxt[:, 0]
    dot = np.sum(first * nxt, axis=1)
    last = n if polyline.closed else n - 1
    for i in np.nonzero((np.abs(cross) <= area_eps) & (dot < 0.0))[0]:
        if i < last:
            j = (i + 1) % n
            hits.add((min(i, j), max(i, j)))

    xmin = np.minimum(seg[:, 0, 0], seg[:, 1, 0])
    xmax = np.maximum(seg[:, 0, 0], seg[:, 1, 0])
    ymin = np.minimum(seg[:, 0, 1], seg[:, 1, 1])
    ymax = np.maximum(seg[:, 0, 1], seg[:, 1, 1])
    order = np.argsort(xmin, kind="stable")
    xmin_sorted = xmin[order]

    for position, i in enumerate(order):
        stop = np.searchsorted(xmin_sorted, xmax[i] + eps, side="right")
        candidates = order[position + 1 : stop]
        if candidates.size == 0:
            continue
        candidates = candidates[(ymin[candidates] <= ymax[i] + eps) & (ymax[candidates] >= ymin[i] - eps)]
        gap = np.abs(candidates - i)
        adjacent = (gap == 1) | (polyline.closed & (gap == n - 1))
        candidates = candidates[~adjacent]
        if candidates.size == 0:
            continue

        p, q = seg[i, 0], seg[i, 1]
        r, s = seg[candidates, 0], seg[candidates, 1]
        o1 = _orient(p, q, r)
        o2 = _orient(p, q, s)
        o3 = _orient(r, s, p)
        o4 = _orient(r, s, q)
        proper = (o1 * o2 < 0.0) & (o3 * o4 < 0.0)
        touching = (
            ((np.abs(o1) <= area_eps) & _on_segment(p, q, r, eps))
            | ((np.abs(o2) <= area_eps) & _on_segment(p, q, s, eps))
            | ((np.abs(o3) <= area_eps) & _on_segment(r, s, np.broadcast_to(p, r.shape), eps))
            | ((np.abs(o4) <= area_eps) & _on_segment(r, s, np.broadcast_to(q, r.shape), eps))
        )
        for j in candidates[proper | touching]:
            hits.add((int(min(i, j)), int(max(i, j))))

    return sorted(hits)


def point_in_polygon(points, polyline: Polyline) -> np.ndarray:
    """Nonzero winding number; points on the boundary are unspecified"""
    return winding_number(points, polyline) != 0


def winding_number(points, polyline: Polyline) -> np.ndarray:
    """Signed turns of the closed polyline around each point (+1 inside a CCW loop)"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = polyline.vertices
    b = np.roll(a, -1, axis=0)
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    # > 0 when the point lies left of the directed edge a -> b
    side = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
    upward = (a[:, 1] <= py) & (b[:, 1] > py) & (side > 0.0)
    downward = (a[:, 1] > py) & (b[:, 1] <= py) & (side < 0.0)
    return np.sum(upward, axis=1) - np.sum(downward, axis=1)


# VALIDATION


def validate_domain(spec: DomainSpec, mesh_size: Optional[float] = None) -> ValidationReport:
    """
    Report orientation, containment clearance, minimum edge length and
    self-intersections. With mesh_size, the clearance must be at least two
    mesh sizes; otherwise it must be positive.
    """
    obstacle = spec.obstacle
    failures = []

    if len(obstacle) < 3 or not obstacle.closed:
        failures.append("vertex count")

    ccw = obstacle.is_counter_clockwise()
    if not ccw:
        failures.append("orientation")

    clearance = spec.ball_radius - obstacle.max_radius()
    required = 2.0 * mesh_size if mesh_size is not None else 0.0
    if clearance <= 0.0 or clearance < required:
        failures.append("containment")

    lengths = obstacle.edge_lengths
    min_edge = float(np.min(lengths)) if lengths.size else 0.0
    if min_edge <= 0.0:
        failures.append("repeated vertex")

    intersections = find_self_intersections(obstacle) if len(obstacle) >= 3 else []
    if intersections:
        failures.append("self-intersection")

    origin_inside = bool(point_in_polygon([[0.0, 0.0]], obstacle)[0]) if len(obstacle) >= 3 else False
    if not origin_inside:
        failures.append("origin outside obstacle")

    report = ValidationReport(
        counter_clockwise=ccw,
        clearance=clearance,
        required_clearance=required,
        min_edge_length=min_edge,
        self_intersections=intersections,
        origin_inside=origin_inside,
        failures=failures,
    )
    if report.passes:
        logger.log(f"domain valid, clearance {clearance:.4g}", "SUCCESS")
    else:
        logger.warning(f"domain invalid: {', '.join(failures)}")
    return report


# FILES


def write_polyline_csv(polyline: Polyline, path: Union[str, Path]) -> Path:
    """x,y rows; closing vertex implied"""
    path = Path(path)
    frame = pd.DataFrame(polyline.vertices, columns=["x", "y"])
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def read_polyline_csv(path: Union[str, Path]) -> Polyline:
    frame = pd.read_csv(path)
    missing = {"x", "y"} - set(frame.columns)
    if missing:
        raise GeometryError(f"{path}: missing columns {sorted(missing)}")
    return Polyline(frame[["x", "y"]].to_numpy(dtype=float))
