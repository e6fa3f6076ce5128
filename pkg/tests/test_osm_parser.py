"""
Tests for OSM ingestion.
"""

import pytest

from rsuplan.core.exceptions import EmptyWindowError, InvalidWindowError, OsmParseError
from rsuplan.core.osm_parser import (
    GeoWindow,
    base_highway_class,
    ingest_osm,
    parse_width,
    road_width,
)
from rsuplan.core.scene_builder import build_scene

WINDOW = GeoWindow(south=0.0, west=0.0, north=0.001, east=0.001)

SAMPLE_OSM = """<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="1" lat="0.0002" lon="0.0002"/>
  <node id="2" lat="0.0002" lon="0.0004"/>
  <node id="3" lat="0.0004" lon="0.0004"/>
  <node id="4" lat="0.0004" lon="0.0002"/>
  <node id="5" lat="0.0006" lon="-0.0001"/>
  <node id="6" lat="0.0006" lon="0.0011"/>
  <node id="7" lat="-0.0001" lon="0.0007"/>
  <node id="8" lat="0.0011" lon="0.0007"/>
  <node id="9" lat="0.0001" lon="0.0001"/>
  <node id="10" lat="0.0001" lon="0.0003"/>
  <way id="100">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="1"/>
    <tag k="building" v="yes"/>
  </way>
  <way id="101">
    <nd ref="5"/><nd ref="6"/>
    <tag k="highway" v="residential"/>
  </way>
  <way id="102">
    <nd ref="7"/><nd ref="8"/>
    <tag k="highway" v="primary_link"/>
    <tag k="lanes" v="2"/>
  </way>
  <way id="103">
    <nd ref="9"/><nd ref="10"/>
    <tag k="highway" v="footway"/>
  </way>
</osm>
"""

MULTIPOLYGON_OSM = """<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="1" lat="0.0002" lon="0.0002"/>
  <node id="2" lat="0.0002" lon="0.0004"/>
  <node id="3" lat="0.0004" lon="0.0004"/>
  <node id="4" lat="0.0004" lon="0.0002"/>
  <way id="200">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><nd ref="1"/>
  </way>
  <relation id="300">
    <member type="way" ref="200" role="outer"/>
    <tag k="type" v="multipolygon"/>
    <tag k="building" v="yes"/>
  </relation>
</osm>
"""


@pytest.fixture
def sample_osm(tmp_path):
    """A tiny extract with one building and three highways."""
    path = tmp_path / "sample.osm"
    path.write_text(SAMPLE_OSM)
    return path


def test_window_parse():
    """Test bounding box parsing."""
    window = GeoWindow.parse("48.85, 2.34, 48.86, 2.35")
    assert window.south == 48.85
    assert window.east == 2.35


@pytest.mark.parametrize("text", ["1,2,0,3", "0,3,1,2", "1,2,3", "a,b,c,d"])
def test_window_parse_rejects_bad_boxes(text):
    """Test empty and malformed windows."""
    with pytest.raises(InvalidWindowError):
        GeoWindow.parse(text)


def test_window_projection_origin():
    """Test that the south-west corner projects to the origin."""
    proj = WINDOW.projection()
    x, y = proj.to_local(WINDOW.west, WINDOW.south)
    assert x == pytest.approx(0.0, abs=1e-6)
    assert y == pytest.approx(0.0, abs=1e-6)
    width, height = WINDOW.extent_m()
    assert width == pytest.approx(111.19, rel=1e-3)
    assert height == pytest.approx(111.19, rel=1e-3)


def test_ingest_buildings_and_roads(sample_osm):
    """Test feature extraction and class filtering."""
    extract = ingest_osm(sample_osm, WINDOW)
    assert len(extract.buildings) == 1
    assert extract.buildings[0].osm_id == 100
    assert extract.buildings[0].footprint.area == pytest.approx(22.24**2, rel=1e-2)

    roads = sorted(extract.roads, key=lambda r: r.osm_id)
    assert [r.osm_id for r in roads] == [101, 102]
    assert roads[0].width_m == 6.0
    assert roads[1].width_m == 7.0
    assert roads[1].road_class == "primary"
    assert extract.projection is not None


def test_ingest_clips_roads_to_window(sample_osm):
    """Test that centerlines are clipped to the map."""
    extract = ingest_osm(sample_osm, WINDOW)
    width, height = extract.bounds
    for road in extract.roads:
        for x, y in road.centerline:
            assert -1e-6 <= x <= width + 1e-6
            assert -1e-6 <= y <= height + 1e-6


def test_ingest_honors_class_list(sample_osm):
    """Test the highway include-list."""
    extract = ingest_osm(sample_osm, WINDOW, highway_classes=("residential",))
    assert [r.osm_id for r in extract.roads] == [101]


def test_ingest_to_scene(sample_osm):
    """Test that an extract builds a scene."""
    extract = ingest_osm(sample_osm, WINDOW)
    scene = build_scene(extract.buildings, extract.roads, extract.bounds, extract.projection)
    assert len(scene.buildings) == 1
    assert scene.road_area > 0
    assert scene.projection == extract.projection


def test_ingest_multipolygon_building(tmp_path):
    """Test building relations."""
    path = tmp_path / "relation.osm"
    path.write_text(MULTIPOLYGON_OSM)
    extract = ingest_osm(path, WINDOW)
    assert len(extract.buildings) == 1
    assert extract.buildings[0].osm_id == 300


def test_malformed_xml_reports_offset(tmp_path):
    """Test parse errors carry a byte offset."""
    path = tmp_path / "broken.osm"
    path.write_text('<osm>\n  <node id="1" lat="0" lon="0">\n</osm>\n')
    with pytest.raises(OsmParseError) as exc_info:
        ingest_osm(path, WINDOW)
    assert exc_info.value.offset > 0


def test_window_without_nodes(sample_osm):
    """Test that a window missing the data is reported."""
    far = GeoWindow(south=10.0, west=10.0, north=10.001, east=10.001)
    with pytest.raises(EmptyWindowError, match="no features in window"):
        ingest_osm(sample_osm, far)


@pytest.mark.parametrize(
    "value,expected",
    [("7", 7.0), ("7.5 m", 7.5), ("7,5", 7.5), ("wide", None), (None, None), ("0", None)],
)
def test_parse_width(value, expected):
    """Test width tag parsing."""
    assert parse_width(value) == expected


def test_road_width_precedence():
    """Test width tag over lanes over class default."""
    widths = {"residential": 6.0}
    assert road_width({"highway": "residential", "width": "9", "lanes": "4"}, widths) == 9.0
    assert road_width({"highway": "residential", "lanes": "4"}, widths) == 14.0
    assert road_width({"highway": "residential"}, widths) == 6.0
    assert road_width({"highway": "busway"}, widths) is None


def test_base_highway_class():
    """Test link classes."""
    assert base_highway_class("motorway_link") == "motorway"
    assert base_highway_class("residential") == "residential"
