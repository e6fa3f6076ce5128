"""
OpenStreetMap XML ingestion: building footprints and drivable road centerlines.
"""

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from shapely.geometry import LineString, Polygon, box
from shapely.ops import polygonize

from rsuplan.core.config import DEFAULT_HIGHWAY_CLASSES, DEFAULT_ROAD_WIDTHS_M
from rsuplan.core.exceptions import (
    EmptyWindowError,
    InvalidParameterError,
    InvalidWindowError,
    OsmParseError,
)
from rsuplan.core.geometry import (
    EARTH_RADIUS_M,
    SLIVER_AREA_M2,
    LocalProjection,
    Point2D,
    SimplePolygon,
    polygon_parts,
)

logger = logging.getLogger(__name__)

LANE_WIDTH_M = 3.5


@dataclass(frozen=True)
class GeoWindow:
    """Geodetic bounding box in WGS84 degrees."""

    south: float
    west: float
    north: float
    east: float

    def __post_init__(self) -> None:
        if not (self.south < self.north and self.west < self.east):
            raise InvalidWindowError()

    @classmethod
    def parse(cls, text: str) -> "GeoWindow":
        """
        Parse 'south,west,north,east'.

        Args:
            text: Comma-separated degrees

        Returns:
            GeoWindow

        Raises:
            InvalidWindowError: If the text does not hold four numbers or the box is empty
        """
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise InvalidWindowError(f"Expected 'south,west,north,east', got '{text}'")
        try:
            south, west, north, east = (float(p) for p in parts)
        except ValueError as e:
            raise InvalidWindowError(f"Non-numeric window '{text}'") from e
        return cls(south=south, west=west, north=north, east=east)

    @property
    def center(self) -> Tuple[float, float]:
        """(lat, lon) of the window center."""
        return ((self.south + self.north) / 2.0, (self.west + self.east) / 2.0)

    def contains(self, lon: float, lat: float) -> bool:
        """Closed-box test."""
        return self.south <= lat <= self.north and self.west <= lon <= self.east

    def projection(self) -> LocalProjection:
        """Equirectangular projection about the center, with the south-west corner at (0, 0)."""
        lat0, lon0 = self.center
        coslat = math.cos(math.radians(lat0))
        x_offset = -EARTH_RADIUS_M * math.radians(self.west - lon0) * coslat
        y_offset = -EARTH_RADIUS_M * math.radians(self.south - lat0)
        return LocalProjection(lat0=lat0, lon0=lon0, x_offset=x_offset, y_offset=y_offset)

    def extent_m(self) -> Tuple[float, float]:
        """Projected (width, height) in meters."""
        proj = self.projection()
        x1, y1 = proj.to_local(self.east, self.north)
        return (x1, y1)


@dataclass(frozen=True)
class RawBuilding:
    """A building footprint before union."""

    footprint: SimplePolygon
    osm_id: Optional[int] = None


@dataclass(frozen=True)
class RawRoad:
    """A road centerline with its carriageway width."""

    centerline: Tuple[Point2D, ...]
    width_m: float
    road_class: str
    osm_id: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.centerline) < 2:
            raise InvalidParameterError("centerline", len(self.centerline), "needs >= 2 points")
        if not self.width_m > 0:
            raise InvalidParameterError("width_m", self.width_m, "must be positive")


@dataclass
class OsmExtract:
    """Buildings and roads read from one window, in map-local meters."""

    buildings: List[RawBuilding]
    roads: List[RawRoad]
    bounds: Tuple[float, float]
    projection: Optional[LocalProjection] = None
    skipped: Dict[str, int] = field(default_factory=dict)


def _byte_offset(path: Path, line: int, column: int) -> int:
    """Translate an expat (line, column) position into a byte offset."""
    try:
        data = path.read_bytes()
    except OSError:
        return 0
    lines = data.splitlines(keepends=True)
    return sum(len(chunk) for chunk in lines[: max(line - 1, 0)]) + column


def parse_width(value: Optional[str]) -> Optional[float]:
    """
    Read an OSM width tag ('7', '7.5 m', '7,5').

    Returns:
        Width in meters, or None when missing or unreadable
    """
    if not value:
        return None
    text = value.strip().lower().replace(",", ".")
    if text.endswith("m"):
        text = text[:-1].strip()
    try:
        width = float(text)
    except ValueError:
        logger.debug(f"Ignoring unreadable width tag '{value}'")
        return None
    return width if width > 0 else None


def road_width(tags: Mapping[str, str], widths: Mapping[str, float]) -> Optional[float]:
    """
    Carriageway width from tags: explicit width, else lanes × 3.5 m, else the class table.

    Args:
        tags: Way tags
        widths: Default width per highway class

    Returns:
        Width in meters, or None for a class without a default
    """
    width = parse_width(tags.get("width"))
    if width is not None:
        return width

    lanes = tags.get("lanes")
    if lanes:
        try:
            count = int(lanes.split(";")[0])
            if count > 0:
                return count * LANE_WIDTH_M
        except ValueError:
            logger.debug(f"Ignoring unreadable lanes tag '{lanes}'")

    return widths.get(base_highway_class(tags.get("highway", "")))


def base_highway_class(value: str) -> str:
    """Map '*_link' classes onto their base class."""
    return value[: -len("_link")] if value.endswith("_link") else value


def _is_building(tags: Mapping[str, str]) -> bool:
    return tags.get("building", "no") != "no"


def _footprints(polygon: Polygon, window_box: Polygon) -> List[SimplePolygon]:
    """Clip to the window and keep the outer ring of every valid part."""
    if not polygon.is_valid:
        polygon = polygon.buffer(0)
    parts: List[SimplePolygon] = []
    for part in polygon_parts(polygon.intersection(window_box)):
        if part.area < SLIVER_AREA_M2:
            continue
        parts.append(SimplePolygon.from_shapely(Polygon(part.exterior)))
    return parts


def _centerlines(coords: Sequence[Point2D], window_box: Polygon) -> List[Tuple[Point2D, ...]]:
    clipped = LineString(coords).intersection(window_box)
    if clipped.is_empty:
        return []
    lines = [clipped] if clipped.geom_type == "LineString" else [
        g for g in getattr(clipped, "geoms", []) if g.geom_type == "LineString"
    ]
    return [tuple((float(x), float(y)) for x, y in g.coords) for g in lines if g.length > 0]


def ingest_osm(
    path: Path,
    window: GeoWindow,
    highway_classes: Iterable[str] = DEFAULT_HIGHWAY_CLASSES,
    road_widths: Optional[Mapping[str, float]] = None,
) -> OsmExtract:
    """
    Read buildings and drivable roads from an OSM XML extract.

    Buildings are closed ways (or outer rings of building multipolygons) tagged
    ``building``; roads are ways whose ``highway`` class is in ``highway_classes``.
    Everything is projected to map-local meters and clipped to the window.

    Args:
        path: OSM XML file
        window: Geodetic window to keep
        highway_classes: Included highway classes ('*_link' maps to its base class)
        road_widths: Default width per class; falls back to the built-in table

    Returns:
        OsmExtract with buildings, roads, bounds and projection

    Raises:
        OsmParseError: If the file is not well-formed XML
        EmptyWindowError: If no node of the extract falls inside the window
    """
    path = Path(path)
    widths = dict(DEFAULT_ROAD_WIDTHS_M)
    if road_widths:
        widths.update(road_widths)
    classes = set(highway_classes)

    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        line, column = e.position
        offset = _byte_offset(path, line, column)
        logger.error(f"Malformed OSM XML in {path} at line {line}, column {column}")
        raise OsmParseError(offset, str(e)) from e
    except OSError as e:
        raise OsmParseError(0, f"cannot read {path}: {e}") from e

    projection = window.projection()
    bounds = window.extent_m()
    window_box = box(0.0, 0.0, bounds[0], bounds[1])

    nodes: Dict[str, Point2D] = {}
    inside = 0
    for node in root.iter("node"):
        try:
            lat = float(node.attrib["lat"])
            lon = float(node.attrib["lon"])
        except (KeyError, ValueError):
            continue
        nodes[node.attrib.get("id", "")] = projection.to_local(lon, lat)
        if window.contains(lon, lat):
            inside += 1

    if inside == 0:
        logger.error(f"No OSM node of {path} lies inside {window}")
        raise EmptyWindowError()

    skipped: Dict[str, int] = {"missing_nodes": 0, "unknown_class": 0, "degenerate": 0}
    way_coords: Dict[str, List[Point2D]] = {}
    buildings: List[RawBuilding] = []
    roads: List[RawRoad] = []

    for way in root.iter("way"):
        way_id = way.attrib.get("id", "")
        tags = {t.attrib["k"]: t.attrib.get("v", "") for t in way.iter("tag") if "k" in t.attrib}
        refs = [nd.attrib.get("ref", "") for nd in way.iter("nd")]
        if any(ref not in nodes for ref in refs):
            skipped["missing_nodes"] += 1
            continue
        coords = [nodes[ref] for ref in refs]
        way_coords[way_id] = coords
        osm_id = int(way_id) if way_id.lstrip("-").isdigit() else None

        if _is_building(tags):
            if len(refs) < 4 or refs[0] != refs[-1]:
                skipped["degenerate"] += 1
                continue
            for footprint in _footprints(Polygon(coords), window_box):
                buildings.append(RawBuilding(footprint=footprint, osm_id=osm_id))
            continue

        highway = tags.get("highway")
        if highway is None or tags.get("area") == "yes":
            continue
        if base_highway_class(highway) not in classes:
            continue
        width = road_width(tags, widths)
        if width is None:
            skipped["unknown_class"] += 1
            continue
        if len(coords) < 2:
            skipped["degenerate"] += 1
            continue
        for line in _centerlines(coords, window_box):
            roads.append(
                RawRoad(
                    centerline=line,
                    width_m=width,
                    road_class=base_highway_class(highway),
                    osm_id=osm_id,
                )
            )

    # Building multipolygons are approximated by their outer rings
    for relation in root.iter("relation"):
        tags = {t.attrib["k"]: t.attrib.get("v", "") for t in relation.iter("tag") if "k" in t.attrib}
        if tags.get("type") != "multipolygon" or not _is_building(tags):
            continue
        outers = [
            LineString(way_coords[m.attrib["ref"]])
            for m in relation.iter("member")
            if m.attrib.get("type") == "way"
            and m.attrib.get("role", "outer") in ("outer", "")
            and m.attrib.get("ref") in way_coords
            and len(way_coords[m.attrib["ref"]]) >= 2
        ]
        rel_id = relation.attrib.get("id", "")
        osm_id = int(rel_id) if rel_id.lstrip("-").isdigit() else None
        for ring in polygonize(outers):
            for footprint in _footprints(ring, window_box):
                buildings.append(RawBuilding(footprint=footprint, osm_id=osm_id))

    if not buildings and not roads:
        logger.warning(f"No buildings or drivable roads found in {path} for {window}")
    else:
        logger.info(f"Ingested {len(buildings)} buildings and {len(roads)} road ways from {path}")
    if any(skipped.values()):
        logger.debug(f"Skipped ways: {skipped}")

    return OsmExtract(
        buildings=buildings,
        roads=roads,
        bounds=bounds,
        projection=projection,
        skipped=skipped,
    )
