"""
Transmission mesh
=================
Triangulates the ball B_R with the obstacle boundary as an internal
constrained interface (Triangle: constrained Delaunay with quality
refinement), then splits every interface node into an interior copy and an
exterior copy so traces may jump across the boundary.
"""

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional

import numpy as np
import triangle as shewchuk_triangle

from errors import MeshError, PreconditionError
from geometry import DomainSpec, Polyline, validate_domain
from models import MetricsReport, Region
from runlog import get_logger

INTERIOR_TAG = 1
EXTERIOR_TAG = 2
OBSTACLE_MARKER = 2
RING_MARKER = 3
DEFAULT_MIN_ANGLE = 20.0

logger = get_logger("mesh")


@dataclass(frozen=True, eq=False)
class TransmissionMesh:
    """
    Conforming triangulation of the ball with doubled interface DOFs.

    interface_pairs[:, 0] are interior copies, [:, 1] exterior copies, both in
    arclength order starting at the first obstacle vertex. Triangles tagged
    INTERIOR_TAG reference only interior copies and vice versa.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    interface_pairs: np.ndarray
    outer_ring: np.ndarray
    h: float
    ball_radius: float
    obstacle: Polyline

    def __post_init__(self):
        for name in ("nodes", "triangles", "regions", "interface_pairs", "outer_ring"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_interface(self) -> int:
        return len(self.interface_pairs)

    @property
    def interface_interior(self) -> np.ndarray:
        return self.interface_pairs[:, 0]

    @property
    def interface_exterior(self) -> np.ndarray:
        return self.interface_pairs[:, 1]

    @property
    def interface_points(self) -> np.ndarray:
        return self.nodes[self.interface_interior]

    def region_triangles(self, region) -> np.ndarray:
        region = Region(region)
        if region == Region.BOTH:
            return self.triangles
        tag = INTERIOR_TAG if region == Region.INTERIOR else EXTERIOR_TAG
        return self.triangles[self.regions == tag]

    def region_nodes(self, region) -> np.ndarray:
        """Sorted node ids touched by the region's triangles"""
        region = Region(region)
        if region == Region.BOTH:
            return np.arange(self.n_nodes)
        return self._region_node_cache[region]

    @cached_property
    def _region_node_cache(self) -> Dict[Region, np.ndarray]:
        return {
            region: np.unique(self.region_triangles(region))
            for region in (Region.INTERIOR, Region.EXTERIOR)
        }

    @cached_property
    def interface_arclength(self) -> np.ndarray:
        """Cumulative arclength of the interface nodes, first node at 0"""
        points = self.interface_points
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @cached_property
    def interface_length(self) -> float:
        points = self.interface_points
        return float(np.sum(np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)))

    @cached_property
    def mesh_id(self) -> str:
        digest = hashlib.sha1()
        digest.update(np.ascontiguousarray(self.nodes).tobytes())
        digest.update(np.ascontiguousarray(self.triangles).tobytes())
        return digest.hexdigest()[:12]

    def region_area(self, region) -> float:
        return float(np.sum(triangle_areas(self.nodes, self.region_triangles(region))))


# GEOMETRY HELPERS


def triangle_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Signed areas, positive for counter-clockwise triangles"""
    a = nodes[tris[:, 0]]
    b = nodes[tris[:, 1]]
    c = nodes[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def triangle_angles(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """(n_tri, 3) interior angles in degrees"""
    corners = nodes[tris]
    angles = np.empty(tris.shape, dtype=float)
    for i in range(3):
        u = corners[:, (i + 1) % 3] - corners[:, i]
        v = corners[:, (i + 2) % 3] - corners[:, i]
        cos = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, i] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return angles


def _orient_tris_ccw(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    areas = triangle_areas(nodes, tris)
    flip = areas < 0.0
    if np.any(flip):
        tris = tris.copy()
        tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _subdivide_closed(vertices: np.ndarray, h: float) -> np.ndarray:
    """Insert equally spaced points so every edge is at most h long"""
    edges = np.roll(vertices, -1, axis=0) - vertices
    counts = np.maximum(np.ceil(np.linalg.norm(edges, axis=1) / h - 1e-9).astype(int), 1)
    pieces = []
    for start, edge, count in zip(vertices, edges, counts):
        t = np.arange(count)[:, None] / count
        pieces.append(start + t * edge)
    return np.vstack(pieces)


# TRIANGULATION


def triangulate(
    spec: DomainSpec,
    h: float,
    min_angle: Optional[float] = None,
) -> TransmissionMesh:
    """
    Mesh the ball with target size h. Obstacle edges are subdivided to length
    at most h and the circle is approximated by ceil(2 pi R / h) uniformly
    spaced ring nodes that Triangle may not split.
    """
    min_angle = DEFAULT_MIN_ANGLE if min_angle is None else float(min_angle)
    if not h > 0.0:
        raise PreconditionError(f"mesh size must be positive, got {h}")

    report = validate_domain(spec, mesh_size=h)
    if not report.passes:
        raise PreconditionError(f"domain fails validation: {', '.join(report.failures)}")
    if h > 0.5 * report.min_edge_length * (1.0 + 1e-9):
        raise PreconditionError(
            f"h = {h:.4g} exceeds half the minimum obstacle edge ({report.min_edge_length:.4g})"
        )

    R = spec.ball_radius
    obstacle = _subdivide_closed(spec.obstacle.vertices, h)
    n_obstacle = len(obstacle)
    n_ring = int(math.ceil(2.0 * math.pi * R / h - 1e-9))
    theta = 2.0 * math.pi * np.arange(n_ring) / n_ring
    ring = R * np.column_stack([np.cos(theta), np.sin(theta)])

    vertices = np.vstack([obstacle, ring])
    obstacle_ids = np.arange(n_obstacle)
    ring_ids = n_obstacle + np.arange(n_ring)
    segments = np.vstack([
        np.column_stack([obstacle_ids, np.roll(obstacle_ids, -1)]),
        np.column_stack([ring_ids, np.roll(ring_ids, -1)]),
    ])
    segment_markers = np.concatenate([
        np.full(n_obstacle, OBSTACLE_MARKER), np.full(n_ring, RING_MARKER)
    ])
    vertex_markers = np.concatenate([
        np.full(n_obstacle, OBSTACLE_MARKER), np.full(n_ring, RING_MARKER)
    ])

    # region seeds: origin lies inside the obstacle; the annulus seed sits
    # half way between the obstacle and the ring on an off-axis ray
    seed_radius = 0.5 * (spec.obstacle.max_radius() + R * math.cos(math.pi / n_ring))
    seed_angle = 0.1234
    max_area = math.sqrt(3.0) / 4.0 * h * h
    regions = np.array([
        [0.0, 0.0, INTERIOR_TAG, max_area],
        [seed_radius * math.cos(seed_angle), seed_radius * math.sin(seed_angle), EXTERIOR_TAG, max_area],
    ])

    data = {
        "vertices": vertices,
        "vertex_markers": vertex_markers[:, None].astype(np.int32),
        "segments": segments.astype(np.int32),
        "segment_markers": segment_markers[:, None].astype(np.int32),
        "regions": regions,
    }
    quality = min(min_angle + 1.0, 33.0)
    opts = f"pq{quality:.6g}a{max_area:.12f}AYQ"
    logger.log(f"triangulating with options {opts}: {n_obstacle} obstacle, {n_ring} ring nodes")
    try:
        result = shewchuk_triangle.triangulate(data, opts)
    except Exception as e:  # noqa: BLE001
        raise MeshError(f"Triangle failed: {e}") from e

    nodes = np.asarray(result["vertices"], dtype=float)
    tris = np.asarray(result["triangles"], dtype=np.int64)
    if "triangle_attributes" not in result:
        raise MeshError("Triangle returned no region attributes")
    tags = np.rint(np.asarray(result["triangle_attributes"]).ravel()).astype(np.int8)
    if not np.all(np.isin(tags, [INTERIOR_TAG, EXTERIOR_TAG])):
        raise MeshError("some triangles were not reached by a region seed")
    markers = np.asarray(result["vertex_markers"]).ravel().astype(int)
    tris = _orient_tris_ccw(nodes, tris)

    areas = triangle_areas(nodes, tris)
    if np.any(areas <= 0.0):
        raise MeshError(f"{int(np.sum(areas <= 0.0))} degenerate triangles")

    angles = triangle_angles(nodes, tris)
    worst = int(np.argmin(np.min(angles, axis=1)))
    worst_angle = float(np.min(angles[worst]))
    if worst_angle < min_angle - 1e-9:
        raise MeshError(
            f"quality threshold {min_angle} deg unreachable: triangle {worst} "
            f"at {nodes[tris[worst]].round(6).tolist()} has angle {worst_angle:.3f} deg"
        )

    # ring: Triangle keeps input vertices in place and Y forbids new ones
    ring_nodes = np.nonzero(markers == RING_MARKER)[0]
    if len(ring_nodes) != n_ring or not np.array_equal(ring_nodes, ring_ids):
        raise MeshError("Triangle inserted points on the truncation circle")

    interface = _ordered_interface(nodes, result, markers, obstacle_ids)
    nodes, tris, pairs = _split_interface(nodes, tris, tags, interface)

    mesh = TransmissionMesh(
        nodes=nodes,
        triangles=tris,
        regions=tags,
        interface_pairs=pairs,
        outer_ring=ring_ids.astype(np.int64),
        h=float(h),
        ball_radius=float(R),
        obstacle=spec.obstacle,
    )
    logger.log(
        f"mesh {mesh.mesh_id}: {mesh.n_nodes} nodes, {len(tris)} triangles, "
        f"{mesh.n_interface} interface pairs, min angle {worst_angle:.2f} deg",
        "SUCCESS",
    )
    return mesh


def _ordered_interface(nodes, result, markers, obstacle_ids) -> np.ndarray:
    """Walk the obstacle subsegments from the first obstacle vertex"""
    segments = np.asarray(result["segments"], dtype=np.int64)
    seg_markers = np.asarray(result["segment_markers"]).ravel().astype(int)
    chain = segments[seg_markers == OBSTACLE_MARKER]
    n_interface = int(np.sum(markers == OBSTACLE_MARKER))
    if len(chain) != n_interface:
        raise MeshError("obstacle subsegments do not form a single closed chain")

    neighbours: Dict[int, list] = {}
    for a, b in chain:
        neighbours.setdefault(int(a), []).append(int(b))
        neighbours.setdefault(int(b), []).append(int(a))
    if any(len(v) != 2 for v in neighbours.values()):
        raise MeshError("obstacle interface has a branching or dangling node")

    start = int(obstacle_ids[0])
    towards = nodes[obstacle_ids[1]] - nodes[start]
    first, second = neighbours[start]
    step = first if np.dot(nodes[first] - nodes[start], towards) > np.dot(nodes[second] - nodes[start], towards) else second

    order = [start]
    previous, current = start, step
    while current != start:
        order.append(current)
        a, b = neighbours[current]
        previous, current = current, (b if a == previous else a)
        if len(order) > n_interface:
            raise MeshError("obstacle interface walk did not close")
    if len(order) != n_interface:
        raise MeshError("obstacle interface is not one closed curve")
    return np.asarray(order, dtype=np.int64)


def _split_interface(nodes, tris, tags, interface):
    """Give exterior triangles their own copies of the interface nodes"""
    n = len(nodes)
    copies = n + np.arange(len(interface))
    remap = np.arange(n)
    remap[interface] = copies
    tris = tris.copy()
    exterior = tags == EXTERIOR_TAG
    tris[exterior] = remap[tris[exterior]]
    nodes = np.vstack([nodes, nodes[interface]])
    pairs = np.column_stack([interface, copies])
    return nodes, tris, pairs


# METRICS


def mesh_metrics(mesh: TransmissionMesh) -> MetricsReport:
    angles = triangle_angles(mesh.nodes, mesh.triangles)
    return MetricsReport(
        n_nodes=mesh.n_nodes,
        n_triangles_interior=len(mesh.region_triangles(Region.INTERIOR)),
        n_triangles_exterior=len(mesh.region_triangles(Region.EXTERIOR)),
        n_nodes_interior=len(mesh.region_nodes(Region.INTERIOR)),
        n_nodes_exterior=len(mesh.region_nodes(Region.EXTERIOR)),
        n_interface=mesh.n_interface,
        n_ring=len(mesh.outer_ring),
        min_angle=float(np.min(angles)),
        max_angle=float(np.max(angles)),
        area_interior=mesh.region_area(Region.INTERIOR),
        area_exterior=mesh.region_area(Region.EXTERIOR),
        h=mesh.h,
        mesh_id=mesh.mesh_id,
    )


def ring_polygon_defect(n_ring: int) -> float:
    """Relative area defect of a regular n-gon inscribed in a circle"""
    return (math.pi - n_ring * math.sin(math.pi / n_ring) * math.cos(math.pi / n_ring)) / math.pi
