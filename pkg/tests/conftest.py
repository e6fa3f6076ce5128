"""
Shared fixtures: small hand-checkable scenes and visibility tables.
"""

from typing import List

import numpy as np
import pytest
from shapely.geometry import box

from rsuplan.core.geometry import Scene, SimplePolygon, union_regions
from rsuplan.core.models import CandidateKind, CandidateSite, SiteRef, VisibilityTable
from rsuplan.core.scene_builder import generate_synthetic_grid
from rsuplan.core.scene_file import save_scene

NO_LOS = -np.inf


@pytest.fixture
def plus_scene() -> Scene:
    """100 m square map: a 10 m wide cross of roads between four 45 m buildings."""
    buildings = (
        SimplePolygon.rectangle(0, 0, 45, 45),
        SimplePolygon.rectangle(55, 0, 100, 45),
        SimplePolygon.rectangle(0, 55, 45, 100),
        SimplePolygon.rectangle(55, 55, 100, 100),
    )
    road = union_regions([box(45, 0, 55, 100), box(0, 45, 100, 55)])
    return Scene(bounds=(100.0, 100.0), buildings=buildings, road_region=tuple(road))


@pytest.fixture
def single_block_scene() -> Scene:
    """One 90 m block framed by 10 m roads (110 m map)."""
    return generate_synthetic_grid(1, 1, block_size=90.0, road_width=10.0)


@pytest.fixture
def scene_file(tmp_path, plus_scene):
    """The plus scene written to disk."""
    return save_scene(plus_scene, tmp_path / "plus.json")


def _placeholder_sites(n: int) -> List[CandidateSite]:
    return [
        CandidateSite(id=i, position=(float(i), 0.0), kind=CandidateKind.CORNER, source=SiteRef(0, 0, i))
        for i in range(n)
    ]


@pytest.fixture
def make_sites():
    """Placeholder candidate sites for solver tests driven by a hand-made table."""
    return _placeholder_sites


@pytest.fixture
def rss_tradeoff_table() -> VisibilityTable:
    """
    Two strong half-coverage sites and one weak full-coverage site.

    Without an RSS target site 2 alone covers everything; at -80 dBm sites 0 and 1
    together are the optimum.
    """
    return VisibilityTable(
        rss=np.array(
            [
                [-70.0, -70.0, NO_LOS, NO_LOS],
                [NO_LOS, NO_LOS, -70.0, -70.0],
                [-90.0, -90.0, -90.0, -90.0],
            ]
        )
    )


@pytest.fixture
def repair_table() -> VisibilityTable:
    """Phase 1 ends below -80 dBm on average and phase 2 has to add site 2."""
    return VisibilityTable(
        rss=np.array(
            [
                [-70.0, -70.0, NO_LOS],
                [NO_LOS, NO_LOS, -110.0],
                [NO_LOS, -100.0, -85.0],
            ]
        )
    )


@pytest.fixture
def swap_table() -> VisibilityTable:
    """Two sites with identical coverage; the second is 20 dB stronger."""
    return VisibilityTable(rss=np.array([[-90.0, -90.0], [-70.0, -70.0]]))
