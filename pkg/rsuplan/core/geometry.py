"""
Polygon kernel: simple polygons, polygons with holes, unions and LOS blockage.

All coordinates are planar map-local meters. Boundaries count as inside for point
containment, and a segment is only blocked when it passes through the interior of
a building.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import shapely
from shapely.geometry import Polygon, box
from shapely.geometry.base import BaseGeometry
from shapely.ops import unary_union
from shapely.strtree import STRtree
from shapely.validation import explain_validity

from rsuplan.core.exceptions import InvalidPolygonError

logger = logging.getLogger(__name__)

Point2D = Tuple[float, float]

# Vertices of different shapes closer than this are snapped together before unions
SNAP_TOLERANCE_M = 1e-6
# Union components smaller than this are reported and dropped
SLIVER_AREA_M2 = 1e-4
EARTH_RADIUS_M = 6_371_008.8


def _canonical_ring(coords: Sequence[Sequence[float]], ccw: bool = True) -> Tuple[Point2D, ...]:
    """
    Normalize a ring: open storage, fixed orientation, no collinear vertices,
    starting at the lexicographically smallest vertex.

    Args:
        coords: Ring coordinates, closed or open
        ccw: Orientation to enforce

    Returns:
        Canonical vertex tuple
    """
    pts = [(float(x), float(y)) for x, y in coords]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]

    # Drop repeated and collinear vertices
    changed = True
    while changed and len(pts) > 3:
        changed = False
        for i in range(len(pts)):
            prev_pt, cur, nxt = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            ax, ay = cur[0] - prev_pt[0], cur[1] - prev_pt[1]
            bx, by = nxt[0] - cur[0], nxt[1] - cur[1]
            cross = ax * by - ay * bx
            scale = math.hypot(ax, ay) * math.hypot(bx, by)
            if scale == 0.0 or (abs(cross) <= 1e-12 * scale and ax * bx + ay * by > 0):
                del pts[i]
                changed = True
                break

    signed = 0.0
    for i in range(len(pts)):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % len(pts)]
        signed += x1 * y2 - x2 * y1
    if (signed > 0) != ccw:
        pts.reverse()

    start = min(range(len(pts)), key=lambda k: pts[k])
    return tuple(pts[start:] + pts[:start])


@dataclass(frozen=True)
class SimplePolygon:
    """A closed, non-self-intersecting polygon (building footprint or city block)."""

    vertices: Tuple[Point2D, ...]

    def __post_init__(self) -> None:
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_shapely(cls, polygon: Polygon) -> "SimplePolygon":
        """Build from the exterior ring of a shapely polygon, canonically ordered."""
        return cls(_canonical_ring(polygon.exterior.coords, ccw=True))

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> "SimplePolygon":
        """Axis-aligned rectangle [x0,x1]×[y0,y1]."""
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @cached_property
    def shape(self) -> Polygon:
        """Shapely view of the polygon."""
        return Polygon(self.vertices)

    @property
    def area(self) -> float:
        """Enclosed area in m²."""
        return float(self.shape.area)

    def validate(self, index: int = 0) -> None:
        """
        Check the SimplePolygon invariants.

        Args:
            index: Position of the polygon in its input list, used in the error

        Raises:
            InvalidPolygonError: If the polygon has < 3 vertices, zero area or
                self-intersects
        """
        if len(self.vertices) < 3:
            raise InvalidPolygonError(index, f"needs at least 3 vertices, got {len(self.vertices)}")
        if not all(math.isfinite(c) for v in self.vertices for c in v):
            raise InvalidPolygonError(index, "non-finite coordinate")
        if self.shape.area <= 0.0:
            raise InvalidPolygonError(index, "zero area")
        if not self.shape.is_valid:
            raise InvalidPolygonError(index, explain_validity(self.shape))


@dataclass(frozen=True)
class PolygonWithHoles:
    """An outer boundary with disjoint inner cutouts (the road surface; holes are blocks)."""

    outer: SimplePolygon
    holes: Tuple[SimplePolygon, ...] = ()

    @classmethod
    def from_shapely(cls, polygon: Polygon) -> "PolygonWithHoles":
        """Build from a shapely polygon keeping its interiors."""
        holes = sorted(
            (SimplePolygon(_canonical_ring(ring.coords, ccw=True)) for ring in polygon.interiors),
            key=lambda h: h.vertices[0],
        )
        return cls(outer=SimplePolygon.from_shapely(polygon), holes=tuple(holes))

    @cached_property
    def shape(self) -> Polygon:
        """Shapely view of the region."""
        return Polygon(self.outer.vertices, [h.vertices for h in self.holes])

    @property
    def area(self) -> float:
        """Area of the outer ring minus the holes, in m²."""
        return float(self.shape.area)

    def rings(self) -> List[Tuple[Point2D, ...]]:
        """
        Rings oriented so the region interior lies on the left.

        Returns:
            Outer ring counter-clockwise, then every hole clockwise
        """
        return [self.outer.vertices] + [tuple(reversed(h.vertices)) for h in self.holes]


Region = Union[SimplePolygon, PolygonWithHoles]


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular projection about a window center, shifted so the window starts at 0."""

    lat0: float
    lon0: float
    x_offset: float
    y_offset: float

    def to_local(self, lon: float, lat: float) -> Point2D:
        """Project geodetic degrees to map-local meters."""
        x = EARTH_RADIUS_M * math.radians(lon - self.lon0) * math.cos(math.radians(self.lat0))
        y = EARTH_RADIUS_M * math.radians(lat - self.lat0)
        return (x + self.x_offset, y + self.y_offset)

    def to_lonlat(self, x: float, y: float) -> Point2D:
        """Inverse of to_local."""
        lat = self.lat0 + math.degrees((y - self.y_offset) / EARTH_RADIUS_M)
        lon = self.lon0 + math.degrees(
            (x - self.x_offset) / (EARTH_RADIUS_M * math.cos(math.radians(self.lat0)))
        )
        return (lon, lat)


@dataclass(frozen=True)
class Scene:
    """
    The geometric world: map bounds, unioned building blocks and the road surface.

    Immutable after construction; the shapely views and the spatial index are built
    lazily and shared by every query.
    """

    bounds: Tuple[float, float]
    buildings: Tuple[SimplePolygon, ...]
    road_region: Tuple[PolygonWithHoles, ...]
    projection: Optional[LocalProjection] = None

    @property
    def width(self) -> float:
        """Map extent M_x in meters."""
        return self.bounds[0]

    @property
    def height(self) -> float:
        """Map extent M_y in meters."""
        return self.bounds[1]

    @cached_property
    def bounds_box(self) -> Polygon:
        """The rectangle [0,M_x]×[0,M_y]."""
        return box(0.0, 0.0, self.width, self.height)

    @cached_property
    def road_shape(self) -> BaseGeometry:
        """Union of all road components as one (multi)polygon, prepared for queries."""
        geom = unary_union([c.shape for c in self.road_region])
        shapely.prepare(geom)
        return geom

    @cached_property
    def building_index(self) -> STRtree:
        """R-tree over the building footprints."""
        return STRtree([b.shape for b in self.buildings])

    @property
    def road_area(self) -> float:
        """Total road surface in m²."""
        return float(sum(c.area for c in self.road_region))

    @property
    def hole_count(self) -> int:
        """Number of holes across all road components."""
        return sum(len(c.holes) for c in self.road_region)

    def to_dict(self) -> dict[str, Any]:
        """Plain-data view used by the scene file format and the digest."""
        data: dict[str, Any] = {
            "bounds": [self.width, self.height],
            "buildings": [[list(v) for v in b.vertices] for b in self.buildings],
            "road_region": [
                {
                    "outer": [list(v) for v in c.outer.vertices],
                    "holes": [[list(v) for v in h.vertices] for h in c.holes],
                }
                for c in self.road_region
            ],
        }
        if self.projection is not None:
            data["projection"] = {
                "lat0": self.projection.lat0,
                "lon0": self.projection.lon0,
                "x_offset": self.projection.x_offset,
                "y_offset": self.projection.y_offset,
            }
        return data

    def digest(self) -> str:
        """Content hash, stable across runs."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def polygon_parts(geom: BaseGeometry) -> List[Polygon]:
    """
    Flatten any geometry into its polygonal parts.

    Lines and points produced by overlay operations are discarded.
    """
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    if hasattr(geom, "geoms"):
        parts: List[Polygon] = []
        for sub in geom.geoms:
            parts.extend(polygon_parts(sub))
        return parts
    return []


def _component_key(polygon: Polygon) -> Tuple[float, float, float, float]:
    minx, miny, maxx, maxy = polygon.bounds
    return (minx, miny, maxx, maxy)


def snap_shapes(shapes: Sequence[BaseGeometry], tolerance: float = SNAP_TOLERANCE_M) -> List[BaseGeometry]:
    """
    Snap each shape onto the shapes before it where their vertices nearly coincide.

    Only vertices within ``tolerance`` of an earlier shape move; everything else
    keeps its exact coordinates.

    Args:
        shapes: Polygonal shapely geometries
        tolerance: Snapping distance in meters

    Returns:
        Shapes in input order
    """
    snapped: List[BaseGeometry] = []
    if not shapes:
        return snapped
    tree = STRtree(list(shapes))
    for index, shape in enumerate(shapes):
        near = sorted(
            int(k) for k in tree.query(shape, predicate="dwithin", distance=tolerance) if k < index
        )
        if near:
            reference = unary_union([snapped[k] for k in near])
            shape = shapely.snap(shape, reference, tolerance)
        snapped.append(shape)
    return snapped


def merge_shapes(shapes: Iterable[BaseGeometry]) -> List[Polygon]:
    """
    Union shapes at full precision after snapping near-coincident vertices, dropping slivers.

    Args:
        shapes: Polygonal shapely geometries

    Returns:
        Maximal connected polygon components in canonical order
    """
    snapped = snap_shapes(list(shapes))
    merged = unary_union(snapped) if snapped else Polygon()
    kept: List[Polygon] = []
    for component in polygon_parts(merged):
        if component.area < SLIVER_AREA_M2:
            logger.warning(f"Dropping degenerate sliver of area {component.area:.2e} m^2")
            continue
        kept.append(component)
    return sorted(kept, key=_component_key)


def union_polygons(polys: Sequence[SimplePolygon]) -> List[SimplePolygon]:
    """
    Merge adjacent or overlapping polygons into solid blocks.

    Holes produced by the union (courtyards) are filled, and filling is repeated
    until no component has holes, so the output blocks never overlap.

    Args:
        polys: Input simple polygons

    Returns:
        Maximal connected components without holes, canonically ordered

    Raises:
        InvalidPolygonError: If any input is degenerate; names its index
    """
    for index, poly in enumerate(polys):
        poly.validate(index)

    components = merge_shapes(p.shape for p in polys)
    while any(len(c.interiors) > 0 for c in components):
        filled = sum(len(c.interiors) for c in components)
        logger.debug(f"Filling {filled} union holes")
        components = merge_shapes(Polygon(c.exterior) for c in components)

    return [SimplePolygon.from_shapely(c) for c in components]


def union_regions(shapes: Iterable[BaseGeometry]) -> List[PolygonWithHoles]:
    """
    Merge polygonal shapes keeping their holes (used for the road surface).

    Args:
        shapes: Polygonal shapely geometries

    Returns:
        Connected components as polygons with holes
    """
    return [PolygonWithHoles.from_shapely(c) for c in merge_shapes(shapes)]


def contains_point(region: Region, p: Point2D) -> bool:
    """
    Point-in-region test; boundaries (outer and hole edges) count as inside.

    Args:
        region: Simple polygon or polygon with holes
        p: Query point

    Returns:
        True iff p lies in the closure of the outer ring minus the open holes
    """
    return bool(shapely.intersects_xy(region.shape, p[0], p[1]))


def contains_points(geom: BaseGeometry, xy: np.ndarray) -> np.ndarray:
    """
    Vectorized containment against any polygonal geometry, boundary inclusive.

    Args:
        geom: Shapely geometry (prepared for speed)
        xy: Array of shape (n, 2)

    Returns:
        Boolean array of length n
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if xy.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(shapely.intersects_xy(geom, xy[:, 0], xy[:, 1]), dtype=bool)


def blocked_mask(
    scene: Scene,
    origin: Sequence[float],
    targets: np.ndarray,
    strict: bool = False,
) -> np.ndarray:
    """
    LOS blockage from one point towards many targets.

    A segment is blocked when its interior meets the interior of a building. With
    ``strict`` any contact with a closed building footprint blocks, including
    grazing a corner, running along a wall or ending on one.

    Args:
        scene: Scene holding the buildings
        origin: Transmitter position
        targets: Array of shape (n, 2)
        strict: Count boundary contact as blockage

    Returns:
        Boolean array, True where the segment is blocked
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    mask = np.zeros(targets.shape[0], dtype=bool)
    if not scene.buildings or targets.shape[0] == 0:
        return mask

    origin_xy = np.asarray(origin, dtype=float).reshape(2)
    # Zero-length segments have an empty interior
    live = np.flatnonzero(np.any(targets != origin_xy, axis=1))
    if live.size == 0:
        return mask

    coords = np.empty((live.size, 2, 2), dtype=float)
    coords[:, 0, :] = origin_xy
    coords[:, 1, :] = targets[live]
    lines = shapely.linestrings(coords)

    predicates = ("intersects",) if strict else ("crosses", "within")
    for predicate in predicates:
        hits = scene.building_index.query(lines, predicate=predicate)
        mask[live[hits[0]]] = True
    return mask


def segment_blocked(scene: Scene, a: Point2D, b: Point2D, strict: bool = False) -> bool:
    """
    Whether the open segment (a, b) passes through the interior of any building.

    Args:
        scene: Scene holding the buildings
        a: First endpoint
        b: Second endpoint
        strict: Count boundary contact as blockage

    Returns:
        True if blocked
    """
    return bool(blocked_mask(scene, a, np.asarray([b], dtype=float), strict=strict)[0])
