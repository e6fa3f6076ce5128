"""
Candidate RSU sites: sharp corners of the road surface plus evenly spaced sites
along long straight sections.
"""

import logging
import math
from dataclasses import replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from rsuplan.core.config import PlanningConfig
from rsuplan.core.exceptions import InvalidParameterError, NoCandidatesError
from rsuplan.core.geometry import Point2D, PolygonWithHoles, Scene, contains_point, contains_points
from rsuplan.core.models import CandidateKind, CandidateSite, SiteRef

logger = logging.getLogger(__name__)


def _unit(vx: float, vy: float) -> Tuple[float, float]:
    norm = math.hypot(vx, vy)
    if norm == 0.0:
        return (0.0, 0.0)
    return (vx / norm, vy / norm)


def turn_angle_deg(prev_pt: Point2D, cur: Point2D, nxt: Point2D) -> float:
    """
    Signed heading change at ``cur`` in degrees, in (-180, 180].

    With the region interior on the left, a positive turn is a convex vertex; the
    interior angle is ``180 - turn``.
    """
    ax, ay = cur[0] - prev_pt[0], cur[1] - prev_pt[1]
    bx, by = nxt[0] - cur[0], nxt[1] - cur[1]
    return math.degrees(math.atan2(ax * by - ay * bx, ax * bx + ay * by))


def corner_indices(ring: Sequence[Point2D], angle_threshold_deg: float) -> List[int]:
    """Vertices whose interior angle deviates from 180° by more than the threshold."""
    m = len(ring)
    return [
        j
        for j in range(m)
        if abs(turn_angle_deg(ring[j - 1], ring[j], ring[(j + 1) % m])) > angle_threshold_deg
    ]


def _inward_bisector(prev_pt: Point2D, cur: Point2D, nxt: Point2D) -> Tuple[float, float]:
    """Unit vector along the angle bisector, towards the interior (left side)."""
    d1 = _unit(cur[0] - prev_pt[0], cur[1] - prev_pt[1])
    d2 = _unit(nxt[0] - cur[0], nxt[1] - cur[1])
    n1 = (-d1[1], d1[0])
    n2 = (-d2[1], d2[0])
    bisector = _unit(n1[0] + n2[0], n1[1] + n2[1])
    if bisector == (0.0, 0.0):
        return n2
    return bisector


def _nudged(
    region: PolygonWithHoles,
    origin: Point2D,
    direction: Tuple[float, float],
    distance: float,
) -> Point2D:
    """Move ``distance`` along ``direction``; try the opposite side, then stay on the boundary."""
    for sign in (1.0, -1.0):
        p = (origin[0] + sign * distance * direction[0], origin[1] + sign * distance * direction[1])
        if contains_point(region, p):
            return p
    return origin


def find_corner_sites(
    scene: Scene,
    angle_threshold_deg: float = 30.0,
    nudge_m: float = 0.5,
) -> List[CandidateSite]:
    """
    One site per sharp vertex of every road ring.

    Args:
        scene: Scene holding the road surface
        angle_threshold_deg: Minimum deviation of the interior angle from 180°
        nudge_m: Offset along the bisector into the road interior

    Returns:
        Corner sites in (component, ring, vertex) order; ids are provisional
    """
    sites: List[CandidateSite] = []
    for c, component in enumerate(scene.road_region):
        for r, ring in enumerate(component.rings()):
            m = len(ring)
            for j in corner_indices(ring, angle_threshold_deg):
                direction = _inward_bisector(ring[j - 1], ring[j], ring[(j + 1) % m])
                sites.append(
                    CandidateSite(
                        id=len(sites),
                        position=_nudged(component, ring[j], direction, nudge_m),
                        kind=CandidateKind.CORNER,
                        source=SiteRef(component=c, ring=r, index=j),
                    )
                )
    logger.debug(f"Found {len(sites)} corner sites")
    return sites


def long_road_site_count(length_m: float, rsu_threshold_m: float) -> int:
    """
    Interior sites on a section: ⌈l / RSU_t⌉ when l > RSU_t, else 0.

    Args:
        length_m: Section length
        rsu_threshold_m: Road-length threshold RSU_t

    Returns:
        Number of sites
    """
    if rsu_threshold_m <= 0:
        raise InvalidParameterError("rsu_threshold_m", rsu_threshold_m, "must be positive")
    if length_m <= rsu_threshold_m:
        return 0
    return int(math.ceil(length_m / rsu_threshold_m - 1e-9))


def _sections(ring: Sequence[Point2D], corners: Sequence[int]) -> Iterable[Tuple[int, List[Point2D]]]:
    """Paths between successive corners as (start vertex, vertex list)."""
    m = len(ring)
    for k, start in enumerate(corners):
        end = corners[(k + 1) % len(corners)]
        span = (end - start) % m or m
        yield start, [ring[(start + t) % m] for t in range(span + 1)]


def _point_at(path: Sequence[Point2D], s: float) -> Tuple[Point2D, Tuple[float, float]]:
    """Point at arc length ``s`` along a polyline and the unit direction of its edge."""
    walked = 0.0
    for a, b in zip(path, path[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if seg > 0 and walked + seg >= s:
            t = (s - walked) / seg
            return (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])), _unit(b[0] - a[0], b[1] - a[1])
        walked += seg
    a, b = path[-2], path[-1]
    return b, _unit(b[0] - a[0], b[1] - a[1])


def section_sites(
    path: Sequence[Point2D],
    rsu_threshold_m: float,
) -> List[Tuple[Point2D, Tuple[float, float]]]:
    """
    Equally spaced points strictly between the two ends of a section.

    Args:
        path: Section polyline from one corner to the next
        rsu_threshold_m: Road-length threshold RSU_t

    Returns:
        (point, inward normal) pairs at fractions k/(n+1), k = 1..n
    """
    length = sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:]))
    n = long_road_site_count(length, rsu_threshold_m)
    out: List[Tuple[Point2D, Tuple[float, float]]] = []
    for k in range(1, n + 1):
        point, direction = _point_at(path, length * k / (n + 1))
        out.append((point, (-direction[1], direction[0])))
    return out


def find_long_road_sites(
    scene: Scene,
    rsu_threshold_m: float = 100.0,
    angle_threshold_deg: float = 30.0,
    nudge_m: float = 0.5,
) -> List[CandidateSite]:
    """
    Sites along boundary sections longer than RSU_t between successive corners.

    Rings without any sharp corner have no sections and contribute nothing.

    Args:
        scene: Scene holding the road surface
        rsu_threshold_m: Road-length threshold RSU_t
        angle_threshold_deg: Corner rule used to delimit sections
        nudge_m: Offset along the inward normal

    Returns:
        Long-road sites; ids are provisional
    """
    if rsu_threshold_m <= 0:
        raise InvalidParameterError("rsu_threshold_m", rsu_threshold_m, "must be positive")

    sites: List[CandidateSite] = []
    for c, component in enumerate(scene.road_region):
        for r, ring in enumerate(component.rings()):
            corners = corner_indices(ring, angle_threshold_deg)
            if not corners:
                continue
            for start, path in _sections(ring, corners):
                for point, normal in section_sites(path, rsu_threshold_m):
                    sites.append(
                        CandidateSite(
                            id=len(sites),
                            position=_nudged(component, point, normal, nudge_m),
                            kind=CandidateKind.LONG_ROAD,
                            source=SiteRef(component=c, ring=r, index=start),
                        )
                    )
    logger.debug(f"Found {len(sites)} long-road sites")
    return sites


def merge_sites(sites: Sequence[CandidateSite], radius_m: float = 5.0) -> List[CandidateSite]:
    """
    Drop sites closer than ``radius_m`` to an already kept one; corner sites go first.

    Args:
        sites: Sites in generation order
        radius_m: Merge radius

    Returns:
        Kept sites, corners first, in input order within each kind
    """
    ordered = [s for s in sites if s.kind is CandidateKind.CORNER] + [
        s for s in sites if s.kind is not CandidateKind.CORNER
    ]
    kept: List[CandidateSite] = []
    kept_xy = np.empty((0, 2), dtype=float)
    for site in ordered:
        if kept_xy.shape[0]:
            dist = np.hypot(kept_xy[:, 0] - site.x, kept_xy[:, 1] - site.y)
            if np.any(dist < radius_m):
                continue
        kept.append(site)
        kept_xy = np.vstack([kept_xy, [site.position]])
    return kept


def assemble_candidates(
    scene: Scene,
    config: Optional[PlanningConfig] = None,
) -> List[CandidateSite]:
    """
    Build the candidate set C: corner and long-road sites, merged and densely indexed.

    Args:
        scene: Scene holding the road surface
        config: Planning configuration (defaults when None)

    Returns:
        Candidate sites with ids 0..|C|-1

    Raises:
        NoCandidatesError: If no site survives
    """
    config = config or PlanningConfig()
    corners = find_corner_sites(scene, config.angle_threshold_deg, config.corner_nudge_m)
    long_road = find_long_road_sites(
        scene, config.rsu_threshold_m, config.angle_threshold_deg, config.corner_nudge_m
    )
    sites = corners + long_road

    if sites:
        inside = contains_points(scene.road_shape, np.array([s.position for s in sites]))
        outside = int((~inside).sum())
        if outside:
            logger.warning(f"Dropping {outside} sites that fall outside the road surface")
        sites = [s for s, ok in zip(sites, inside) if ok]

    merged = merge_sites(sites, config.merge_radius_m)
    if not merged:
        logger.error("Candidate generation produced no sites")
        raise NoCandidatesError()

    candidates = [replace(site, id=k) for k, site in enumerate(merged)]
    logger.info(
        f"{len(candidates)} candidates ({len(corners)} corner, {len(long_road)} long-road "
        f"before merging within {config.merge_radius_m:g} m)"
    )
    return candidates
