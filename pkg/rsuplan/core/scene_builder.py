"""
Scene construction from raw features, synthetic city generators and section splitting.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from shapely import affinity
from shapely.geometry import LineString, Polygon, box
from shapely.ops import unary_union

from rsuplan.core.exceptions import InvalidParameterError, NoRoadSurfaceError
from rsuplan.core.geometry import (
    SLIVER_AREA_M2,
    LocalProjection,
    Point2D,
    PolygonWithHoles,
    Scene,
    SimplePolygon,
    merge_shapes,
    polygon_parts,
    union_polygons,
    union_regions,
)
from rsuplan.core.osm_parser import RawBuilding, RawRoad

logger = logging.getLogger(__name__)


def road_polygon(road: RawRoad) -> Polygon:
    """Buffer a centerline to its carriageway: flat caps, mitred joins."""
    return LineString(road.centerline).buffer(
        road.width_m / 2.0, cap_style="flat", join_style="mitre"
    )


def _clip_blocks(blocks: Sequence[SimplePolygon], window: Polygon) -> List[SimplePolygon]:
    clipped: List[SimplePolygon] = []
    for block in blocks:
        if window.contains(block.shape):
            clipped.append(block)
            continue
        for part in polygon_parts(block.shape.intersection(window)):
            if part.area >= SLIVER_AREA_M2:
                clipped.append(SimplePolygon.from_shapely(Polygon(part.exterior)))
    return sorted(clipped, key=lambda b: b.vertices[0])


def build_scene(
    buildings: Sequence[RawBuilding],
    roads: Sequence[RawRoad],
    bounds: Tuple[float, float],
    projection: Optional[LocalProjection] = None,
) -> Scene:
    """
    Assemble a Scene: unioned building blocks and the road polygon-with-holes.

    Buildings are unioned with courtyards filled. Roads are buffered, unioned without
    filling (their holes are city blocks), then building footprints are cut out of the
    road surface and everything is clipped to ``[0, Mx] × [0, My]``.

    Args:
        buildings: Building footprints
        roads: Road centerlines with widths
        bounds: Map extent (Mx, My) in meters
        projection: Optional geodetic origin to keep on the scene

    Returns:
        Scene

    Raises:
        InvalidParameterError: If the bounds are not positive
        InvalidPolygonError: If a building footprint is degenerate
        NoRoadSurfaceError: If no road surface remains inside the bounds
    """
    width, height = float(bounds[0]), float(bounds[1])
    if width <= 0 or height <= 0:
        raise InvalidParameterError("bounds", bounds, "extent must be positive")
    window = box(0.0, 0.0, width, height)

    blocks = _clip_blocks(union_polygons([b.footprint for b in buildings]), window)
    logger.debug(f"{len(buildings)} footprints merged into {len(blocks)} blocks")

    road_parts = merge_shapes(road_polygon(r) for r in roads)
    surface = unary_union(road_parts) if road_parts else Polygon()
    if blocks:
        surface = surface.difference(unary_union([b.shape for b in blocks]))
    surface = surface.intersection(window)

    components = union_regions(polygon_parts(surface))
    if not components:
        logger.error("Road union is empty after clipping to the map bounds")
        raise NoRoadSurfaceError()

    scene = Scene(
        bounds=(width, height),
        buildings=tuple(blocks),
        road_region=tuple(components),
        projection=projection,
    )
    logger.info(
        f"Scene {width:.0f}x{height:.0f} m: {len(blocks)} blocks, "
        f"{len(components)} road components, {scene.hole_count} holes"
    )
    return scene


def _check_grid_args(nx: int, ny: int, block_size: float, road_width: float) -> None:
    if nx < 1:
        raise InvalidParameterError("nx", nx, "must be >= 1")
    if ny < 1:
        raise InvalidParameterError("ny", ny, "must be >= 1")
    if block_size <= 0:
        raise InvalidParameterError("block_size", block_size, "must be positive")
    if road_width <= 0:
        raise InvalidParameterError("road_width", road_width, "must be positive")


def _grid_origins(n: int, block_size: float, road_width: float) -> List[float]:
    return [road_width + k * (block_size + road_width) for k in range(n)]


def generate_synthetic_grid(
    nx: int,
    ny: int,
    block_size: float = 90.0,
    road_width: float = 10.0,
) -> Scene:
    """
    Manhattan-style city: nx × ny square blocks separated by uniform roads.

    The map extent is n·block + (n+1)·road along each axis, with a road on every grid
    line including the outer frame.

    Args:
        nx: Blocks along x
        ny: Blocks along y
        block_size: Block edge in meters
        road_width: Road width in meters

    Returns:
        Scene with nx·ny buildings and a road surface holding nx·ny holes
    """
    _check_grid_args(nx, ny, block_size, road_width)
    width = nx * block_size + (nx + 1) * road_width
    height = ny * block_size + (ny + 1) * road_width
    half = road_width / 2.0

    roads: List[RawRoad] = []
    for k in range(ny + 1):
        y = half + k * (block_size + road_width)
        roads.append(RawRoad(centerline=((0.0, y), (width, y)), width_m=road_width, road_class="grid"))
    for k in range(nx + 1):
        x = half + k * (block_size + road_width)
        roads.append(RawRoad(centerline=((x, 0.0), (x, height)), width_m=road_width, road_class="grid"))

    buildings = [
        RawBuilding(footprint=SimplePolygon.rectangle(x0, y0, x0 + block_size, y0 + block_size))
        for y0 in _grid_origins(ny, block_size, road_width)
        for x0 in _grid_origins(nx, block_size, road_width)
    ]
    return build_scene(buildings, roads, (width, height))


def _irregular_block(
    rng: np.random.Generator,
    x0: float,
    y0: float,
    size: float,
    jitter: float,
) -> SimplePolygon:
    """A square block with corners pulled inward and dented sides."""
    x1, y1 = x0 + size, y0 + size
    corners = [(x0, y0, 1, 1), (x1, y0, -1, 1), (x1, y1, -1, -1), (x0, y1, 1, -1)]
    vertices: List[Point2D] = []
    for k, (cx, cy, sx, sy) in enumerate(corners):
        dx, dy = rng.uniform(0.0, jitter, size=2)
        vertices.append((cx + sx * dx, cy + sy * dy))

        # Extra vertices along the side towards the next corner, pushed inward
        tx, ty, _, _ = corners[(k + 1) % 4]
        n_extra = int(rng.integers(0, 3))
        fractions = np.sort(rng.uniform(0.2, 0.8, size=n_extra))
        inward = np.array([-(ty - cy), tx - cx]) / size
        for f in fractions:
            depth = rng.uniform(0.0, jitter)
            vertices.append(
                (cx + f * (tx - cx) + inward[0] * depth, cy + f * (ty - cy) + inward[1] * depth)
            )

    polygon = SimplePolygon(tuple(vertices))
    if not polygon.shape.is_valid:
        return SimplePolygon.rectangle(x0, y0, x1, y1)
    return polygon


def generate_irregular_scene(
    nx: int,
    ny: int,
    block_size: float = 90.0,
    road_width: float = 10.0,
    jitter: float = 12.0,
    seed: int = 0,
) -> Scene:
    """
    Irregular city: grid blocks perturbed by seeded random inward offsets.

    Block corners move inward by up to ``jitter`` meters and sides gain dented
    vertices, so streets vary in width and blocks lose their right angles. The road
    surface is everything inside the bounds that is not a building.

    Args:
        nx: Blocks along x
        ny: Blocks along y
        block_size: Nominal block edge in meters
        road_width: Nominal road width in meters
        jitter: Maximum inward displacement in meters, below block_size / 5
        seed: RNG seed

    Returns:
        Scene, identical for identical arguments
    """
    _check_grid_args(nx, ny, block_size, road_width)
    if not 0.0 <= jitter < block_size / 5.0:
        raise InvalidParameterError("jitter", jitter, "must be in [0, block_size / 5)")

    width = nx * block_size + (nx + 1) * road_width
    height = ny * block_size + (ny + 1) * road_width
    rng = np.random.default_rng(seed)

    blocks = [
        _irregular_block(rng, x0, y0, block_size, jitter)
        for y0 in _grid_origins(ny, block_size, road_width)
        for x0 in _grid_origins(nx, block_size, road_width)
    ]
    merged = union_polygons(blocks)
    surface = box(0.0, 0.0, width, height).difference(unary_union([b.shape for b in merged]))
    components = union_regions(polygon_parts(surface))
    if not components:
        raise NoRoadSurfaceError()

    logger.info(f"Irregular scene {width:.0f}x{height:.0f} m with {len(merged)} blocks (seed {seed})")
    return Scene(
        bounds=(width, height),
        buildings=tuple(merged),
        road_region=tuple(components),
    )


def split_scene(
    scene: Scene,
    sections_x: int,
    sections_y: int,
) -> List[Tuple[Tuple[int, int], Scene]]:
    """
    Cut a scene into sections_x × sections_y independent maps.

    Each section is clipped, shifted so it starts at the origin and keeps a shifted
    projection. Sections without road surface are skipped with a warning.

    Args:
        scene: Source scene
        sections_x: Number of columns
        sections_y: Number of rows

    Returns:
        ((row, col), section scene) pairs in row-major order from the south-west
    """
    if sections_x < 1:
        raise InvalidParameterError("sections_x", sections_x, "must be >= 1")
    if sections_y < 1:
        raise InvalidParameterError("sections_y", sections_y, "must be >= 1")

    step_x = scene.width / sections_x
    step_y = scene.height / sections_y
    sections: List[Tuple[Tuple[int, int], Scene]] = []

    for row in range(sections_y):
        for col in range(sections_x):
            x0, y0 = col * step_x, row * step_y
            window = box(x0, y0, x0 + step_x, y0 + step_y)

            blocks = [
                SimplePolygon.from_shapely(
                    affinity.translate(Polygon(part.exterior), xoff=-x0, yoff=-y0)
                )
                for b in scene.buildings
                for part in polygon_parts(b.shape.intersection(window))
                if part.area >= SLIVER_AREA_M2
            ]
            road: List[PolygonWithHoles] = union_regions(
                affinity.translate(part, xoff=-x0, yoff=-y0)
                for part in polygon_parts(scene.road_shape.intersection(window))
            )
            if not road:
                logger.warning(f"Section ({row}, {col}) has no road surface; skipped")
                continue

            projection = None
            if scene.projection is not None:
                projection = LocalProjection(
                    lat0=scene.projection.lat0,
                    lon0=scene.projection.lon0,
                    x_offset=scene.projection.x_offset - x0,
                    y_offset=scene.projection.y_offset - y0,
                )
            sections.append(
                (
                    (row, col),
                    Scene(
                        bounds=(step_x, step_y),
                        buildings=tuple(sorted(blocks, key=lambda b: b.vertices[0])),
                        road_region=tuple(road),
                        projection=projection,
                    ),
                )
            )

    logger.info(f"Split scene into {len(sections)} sections")
    return sections
