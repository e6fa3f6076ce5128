"""
Tests for candidate site generation.
"""

import numpy as np
import pytest
from shapely.geometry import Point, box

from rsuplan.core.candidates import (
    assemble_candidates,
    corner_indices,
    find_corner_sites,
    find_long_road_sites,
    long_road_site_count,
    merge_sites,
    section_sites,
    turn_angle_deg,
)
from rsuplan.core.config import PlanningConfig
from rsuplan.core.exceptions import InvalidParameterError, NoCandidatesError
from rsuplan.core.geometry import Scene, contains_points, union_regions
from rsuplan.core.models import CandidateKind, CandidateSite, SiteRef


def test_turn_angle():
    """Test signed heading change."""
    assert turn_angle_deg((0, 0), (1, 0), (1, 1)) == pytest.approx(90.0)
    assert turn_angle_deg((0, 0), (1, 0), (1, -1)) == pytest.approx(-90.0)
    assert turn_angle_deg((0, 0), (1, 0), (2, 0)) == pytest.approx(0.0)


def test_corner_indices_threshold():
    """Test that shallow bends are not corners."""
    ring = [(0, 0), (10, 0), (20, 1), (20, 10), (0, 10)]
    assert corner_indices(ring, 30.0) == [0, 2, 3, 4]


@pytest.mark.parametrize(
    "length,expected",
    [(99.0, 0), (100.0, 0), (101.0, 2), (250.0, 3), (1000.0, 10)],
)
def test_long_road_site_count(length, expected):
    """Test the strictly-longer-than rule and the ceiling count."""
    assert long_road_site_count(length, 100.0) == expected


@pytest.mark.parametrize("length,expected", [(99.0, 0), (100.0, 0), (101.0, 2), (250.0, 3), (1000.0, 10)])
def test_section_sites_on_straight_road(length, expected):
    """Test interior site placement on a straight section."""
    sites = section_sites([(0.0, 0.0), (length, 0.0)], 100.0)
    assert len(sites) == expected
    xs = [p[0] for p, _ in sites]
    assert xs == pytest.approx([length * k / (expected + 1) for k in range(1, expected + 1)])
    for _, normal in sites:
        assert normal == pytest.approx((0.0, 1.0))


def test_long_road_threshold_validation():
    """Test that RSU_t must be positive."""
    with pytest.raises(InvalidParameterError):
        long_road_site_count(50.0, 0.0)


def test_plus_scene_corners(plus_scene):
    """Test that every vertex of the cross is a corner site inside the road."""
    corners = find_corner_sites(plus_scene)
    assert len(corners) == 12
    positions = np.array([c.position for c in corners])
    assert contains_points(plus_scene.road_shape, positions).all()


def test_plus_scene_candidates(plus_scene):
    """Test the assembled candidate set."""
    candidates = assemble_candidates(plus_scene)
    assert len(candidates) == 12
    assert [c.id for c in candidates] == list(range(12))
    assert all(c.kind is CandidateKind.CORNER for c in candidates)


def test_plus_scene_long_road_sites(plus_scene):
    """Test long-road sites on the 45 m arm sides."""
    sites = find_long_road_sites(plus_scene, rsu_threshold_m=40.0)
    assert len(sites) == 16
    candidates = assemble_candidates(plus_scene, PlanningConfig(rsu_threshold_m=40.0))
    assert len(candidates) == 28
    kinds = [c.kind for c in candidates]
    assert kinds[:12] == [CandidateKind.CORNER] * 12
    assert kinds[12:] == [CandidateKind.LONG_ROAD] * 16


def test_single_block_candidates(single_block_scene):
    """Test the framed block: 8 corners plus 2 sites per 110 m outer edge."""
    candidates = assemble_candidates(single_block_scene)
    kinds = [c.kind for c in candidates]
    assert kinds.count(CandidateKind.CORNER) == 8
    assert kinds.count(CandidateKind.LONG_ROAD) == 8


def test_corner_sites_are_nudged_inward(single_block_scene):
    """Test the offset along the inward bisector."""
    corners = find_corner_sites(single_block_scene, nudge_m=0.5)
    origin = min(corners, key=lambda c: c.x + c.y)
    assert origin.position == pytest.approx((0.5 / np.sqrt(2), 0.5 / np.sqrt(2)))


def test_merge_prefers_corners():
    """Test that close sites collapse onto the corner."""
    corner = CandidateSite(0, (0.0, 0.0), CandidateKind.CORNER, SiteRef(0, 0, 0))
    near = CandidateSite(1, (3.0, 0.0), CandidateKind.LONG_ROAD, SiteRef(0, 0, 0))
    far = CandidateSite(2, (30.0, 0.0), CandidateKind.LONG_ROAD, SiteRef(0, 0, 0))
    kept = merge_sites([near, far, corner], radius_m=5.0)
    assert [s.id for s in kept] == [0, 2]


def test_no_corners_means_no_candidates(plus_scene):
    """Test the empty candidate set error."""
    config = PlanningConfig(angle_threshold_deg=120.0)
    with pytest.raises(NoCandidatesError):
        assemble_candidates(plus_scene, config)


def test_candidates_are_deterministic(single_block_scene):
    """Test identical output on repeated runs."""
    assert assemble_candidates(single_block_scene) == assemble_candidates(single_block_scene)


def test_straight_road_candidates():
    """Test a 300 m x 10 m road: 4 corners plus 3 sites along each long side."""
    road = union_regions([box(0.0, 0.0, 300.0, 10.0)])
    scene = Scene(bounds=(300.0, 10.0), buildings=(), road_region=tuple(road))
    candidates = assemble_candidates(scene, PlanningConfig(rsu_threshold_m=100.0))
    kinds = [c.kind for c in candidates]
    assert len(candidates) == 10
    assert kinds.count(CandidateKind.CORNER) == 4
    assert kinds.count(CandidateKind.LONG_ROAD) == 6
    xs = sorted(round(c.x) for c in candidates if c.kind is CandidateKind.LONG_ROAD)
    assert xs == [75, 75, 150, 150, 225, 225]


def test_circular_plaza_has_no_corners():
    """Test that a smooth ring road yields no corner or long-road sites."""
    center = Point(50.0, 50.0)
    ring = center.buffer(40.0, quad_segs=32).difference(center.buffer(30.0, quad_segs=32))
    scene = Scene(bounds=(100.0, 100.0), buildings=(), road_region=tuple(union_regions([ring])))
    assert find_corner_sites(scene) == []
    assert find_long_road_sites(scene) == []
    with pytest.raises(NoCandidatesError):
        assemble_candidates(scene)
