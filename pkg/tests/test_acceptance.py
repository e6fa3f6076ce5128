"""
Long-running oracle suites and end-to-end checks on synthetic cities.

Run with ``pytest -m slow``.
"""

import logging
from dataclasses import replace

import numpy as np
import pytest
import shapely
from shapely.geometry import LineString, box
from shapely.ops import unary_union

from rsuplan.core.baselines import solve_exhaustive, solve_ga, solve_gc
from rsuplan.core.config import SWEEP_RSS_THRESHOLDS, SWEEP_TAUS, Algorithm, GaConfig, PlanningConfig
from rsuplan.core.coverage import evaluate_deployment
from rsuplan.core.geometry import (
    Scene,
    SimplePolygon,
    blocked_mask,
    contains_points,
    union_polygons,
    union_regions,
)
from rsuplan.core.models import VisibilityTable
from rsuplan.core.pipeline import PlanningPipeline, run_plan
from rsuplan.core.placement import phase2, solve_agile
from rsuplan.core.scene_builder import generate_irregular_scene, generate_synthetic_grid
from rsuplan.core.scene_file import save_scene

logger = logging.getLogger(__name__)

pytestmark = pytest.mark.slow

SUITE_GA = GaConfig(population_size=60, generations=150)


@pytest.fixture(scope="module")
def manhattan():
    """The 5x5 grid of 90 m blocks and 10 m roads, prepared once."""
    pipeline = PlanningPipeline(PlanningConfig())
    return pipeline.prepare(generate_synthetic_grid(5, 5), name="manhattan")


@pytest.fixture(scope="module")
def irregular():
    """A perturbed 5x5 city, prepared once."""
    pipeline = PlanningPipeline(PlanningConfig())
    return pipeline.prepare(generate_irregular_scene(5, 5, seed=7), name="irregular")


@pytest.mark.parametrize("tau", SWEEP_TAUS)
@pytest.mark.parametrize("rss_th", SWEEP_RSS_THRESHOLDS)
def test_feasibility_suite(manhattan, tau, rss_th):
    """Test every solver against the independent evaluator on the grid city."""
    table = manhattan.table
    if not evaluate_deployment(table, range(table.n_candidates), tau, rss_th).feasible:
        pytest.skip("no subset of C is feasible for this cell")

    config = PlanningConfig(tau=tau, rss_th_dbm=rss_th)
    agile = solve_agile(manhattan.scene, manhattan.candidates, config, table=table)
    assert evaluate_deployment(table, agile.chosen, tau, rss_th).feasible

    gc = solve_gc(table, tau, rss_th)
    assert evaluate_deployment(table, gc.chosen, tau, rss_th).coverage_ok

    ga = solve_ga(table, tau, rss_th, SUITE_GA)
    assert evaluate_deployment(table, ga.chosen, tau, rss_th).feasible

    repaired_gc = phase2(table, gc, tau, rss_th)
    assert evaluate_deployment(table, repaired_gc.chosen, tau, rss_th).feasible
    assert agile.objective <= repaired_gc.objective


def _random_instance(rng: np.random.Generator) -> VisibilityTable:
    n_candidates = int(rng.integers(6, 13))
    rss = rng.uniform(-95.0, -65.0, size=(n_candidates, 40))
    rss[rng.random(rss.shape) < 0.65] = -np.inf
    return VisibilityTable(rss=rss)


def test_optimality_gap_suite(make_sites):
    """Test agile against the exhaustive optimum on seeded random instances."""
    rng = np.random.default_rng(2024)
    gaps = []
    while len(gaps) < 50:
        table = _random_instance(rng)
        rss_th = -84.0 if len(gaps) % 2 else None
        config = PlanningConfig(tau=0.9, rss_th_dbm=rss_th)
        if not evaluate_deployment(table, range(table.n_candidates), 0.9, rss_th).feasible:
            continue
        optimum = solve_exhaustive(table, 0.9, rss_th)
        agile = solve_agile(None, make_sites(table.n_candidates), config, table=table)
        assert agile.feasible
        assert agile.objective >= optimum.objective
        gaps.append(agile.objective - optimum.objective)

    logger.info(f"Optimality gaps: {np.bincount(gaps).tolist()}")
    assert np.median(gaps) <= 1


@pytest.mark.parametrize("scene_name", ["manhattan", "irregular"])
def test_agile_is_monotone_in_tau(request, scene_name):
    """Test that a larger tolerance never needs fewer RSUs."""
    prepared = request.getfixturevalue(scene_name)
    sizes = []
    for tau in SWEEP_TAUS:
        config = PlanningConfig(tau=tau)
        sizes.append(
            solve_agile(prepared.scene, prepared.candidates, config, table=prepared.table).objective
        )
    assert sizes == sorted(sizes)


def test_runs_are_byte_identical(tmp_path):
    """Test that repeated runs export identical deployments."""
    scene_file = save_scene(generate_synthetic_grid(3, 3), tmp_path / "grid.json")
    for algorithm in ("agile", "ga"):
        config = PlanningConfig(tau=0.9, rss_th_dbm=-84.0, seed=5, ga=GaConfig(population_size=30, generations=40))
        config = config.with_overrides(algorithm=algorithm)
        a = run_plan(scene_file, config, tmp_path / f"{algorithm}-a")
        b = run_plan(scene_file, config, tmp_path / f"{algorithm}-b")
        assert a.status == b.status
        if a.status == "feasible":
            first = (tmp_path / f"{algorithm}-a" / "deployment.geojson").read_bytes()
            second = (tmp_path / f"{algorithm}-b" / "deployment.geojson").read_bytes()
            assert first == second


RATIO_CELLS = [(0.9, None), (0.9, -84.0)]


def _ga_agile_ratio(prepared, tau: float, rss_th, seeds: range) -> float:
    config = PlanningConfig(tau=tau, rss_th_dbm=rss_th)
    agile = solve_agile(prepared.scene, prepared.candidates, config, table=prepared.table)
    sizes = []
    for seed in seeds:
        ga = solve_ga(prepared.table, tau, rss_th, replace(SUITE_GA, seed=seed))
        assert evaluate_deployment(prepared.table, ga.chosen, tau, rss_th).feasible
        sizes.append(ga.objective)
    return float(np.mean(sizes)) / agile.objective


def test_ga_agile_ratio(manhattan, irregular):
    """Test that GA never beats agile on the grid and does relatively worse on the irregular city."""
    grid_ratios, irregular_ratios = [], []
    for tau, rss_th in RATIO_CELLS:
        grid_ratio = _ga_agile_ratio(manhattan, tau, rss_th, range(10))
        irregular_ratio = _ga_agile_ratio(irregular, tau, rss_th, range(10))
        logger.info(
            f"GA/agile RSU ratio at tau={tau}, rss_th={rss_th}: "
            f"grid {grid_ratio:.3f}, irregular {irregular_ratio:.3f}"
        )
        assert grid_ratio >= 1.0
        assert irregular_ratio >= 1.0
        grid_ratios.append(grid_ratio)
        irregular_ratios.append(irregular_ratio)
    assert np.mean(irregular_ratios) > np.mean(grid_ratios)


@pytest.mark.parametrize("scene_name", ["manhattan", "irregular"])
def test_sweep_is_monotone_in_tau(request, scene_name):
    """Test through the sweep runner that a larger tolerance never needs fewer RSUs."""
    prepared = request.getfixturevalue(scene_name)
    frame, _ = PlanningPipeline(PlanningConfig()).run_sweep(
        prepared, SWEEP_TAUS, [None], [Algorithm.AGILE]
    )
    feasible = frame[frame["status"] == "feasible"].sort_values("tau")
    assert len(feasible) == len(SWEEP_TAUS)
    sizes = feasible["n_deployed"].tolist()
    assert sizes == sorted(sizes)


def _random_rectangles(rng: np.random.Generator, count: int, extent: float = 100.0) -> list:
    rects = []
    for _ in range(count):
        x0, y0 = rng.uniform(0.0, extent * 0.8, size=2)
        w, h = rng.uniform(2.0, extent * 0.3, size=2)
        rects.append(SimplePolygon.rectangle(x0, y0, min(x0 + w, extent), min(y0 + h, extent)))
    return rects


def _random_scene(rng: np.random.Generator) -> Scene:
    buildings = union_polygons(_random_rectangles(rng, int(rng.integers(3, 9))))
    road = box(0.0, 0.0, 100.0, 100.0).difference(unary_union([b.shape for b in buildings]))
    return Scene(bounds=(100.0, 100.0), buildings=tuple(buildings), road_region=tuple(union_regions([road])))


def _ray_crossing(rings, xy: np.ndarray) -> np.ndarray:
    """Even-odd rule over every ring."""
    x, y = xy[:, 0], xy[:, 1]
    inside = np.zeros(len(xy), dtype=bool)
    for ring in rings:
        pts = np.asarray(ring, dtype=float)
        for (px, py), (qx, qy) in zip(pts, np.roll(pts, -1, axis=0)):
            straddles = (py > y) != (qy > y)
            if qy == py:
                continue
            x_cross = px + (y - py) * (qx - px) / (qy - py)
            inside ^= straddles & (x < x_cross)
    return inside


def _edge_distance(rings, xy: np.ndarray) -> np.ndarray:
    best = np.full(len(xy), np.inf)
    for ring in rings:
        pts = np.asarray(ring, dtype=float)
        for p, q in zip(pts, np.roll(pts, -1, axis=0)):
            d = q - p
            t = np.clip(((xy - p) @ d) / (d @ d), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(xy - (p + t[:, None] * d), axis=1))
    return best


def test_containment_matches_ray_crossing():
    """Test road-region containment against an even-odd oracle on random scenes."""
    rng = np.random.default_rng(99)
    for _ in range(200):
        scene = _random_scene(rng)
        xy = rng.uniform(-5.0, 105.0, size=(10_000, 2))
        for region in scene.road_region:
            rings = region.rings()
            clear = _edge_distance(rings, xy) > 1e-6
            expected = _ray_crossing(rings, xy)
            actual = contains_points(region.shape, xy)
            assert np.array_equal(actual[clear], expected[clear])


def test_blocking_matches_sampling():
    """Test LOS against interior sampling on random scenes, tangential cases aside."""
    rng = np.random.default_rng(5)
    for _ in range(200):
        scene = _random_scene(rng)
        rings = [b.vertices for b in scene.buildings]
        union = unary_union([b.shape for b in scene.buildings])
        origin = rng.uniform(0.0, 100.0, size=2)
        targets = rng.uniform(0.0, 100.0, size=(50, 2))
        mask = blocked_mask(scene, origin, targets)
        t = np.linspace(0.0, 1.0, 1000)[1:-1]
        for target, blocked in zip(targets, mask):
            samples = origin + t[:, None] * (target - origin)
            inside = _ray_crossing(rings, samples) & (_edge_distance(rings, samples) > 1e-9)
            if inside.any():
                assert blocked
            elif blocked:
                step = float(np.linalg.norm(target - origin)) / 999.0
                overlap = LineString([origin, target]).intersection(union)
                pieces = shapely.get_parts(overlap)
                assert max(p.length for p in pieces) < 2.0 * step + 1e-9


def test_union_area_matches_inclusion_exclusion():
    """Test rectangle-pair union areas."""
    rng = np.random.default_rng(17)
    for _ in range(1000):
        a, b = _random_rectangles(rng, 2)
        (ax0, ay0), (ax1, ay1) = a.shape.bounds[:2], a.shape.bounds[2:]
        (bx0, by0), (bx1, by1) = b.shape.bounds[:2], b.shape.bounds[2:]
        overlap = max(0.0, min(ax1, bx1) - max(ax0, bx0)) * max(0.0, min(ay1, by1) - max(ay0, by0))
        expected = a.area + b.area - overlap
        total = sum(p.area for p in union_polygons([a, b]))
        assert total == pytest.approx(expected, rel=1e-9)


def test_coverage_monotone_trials():
    """Test coverage and top-mean monotonicity over incremental deployments."""
    rng = np.random.default_rng(23)
    for _ in range(1000):
        n_candidates = int(rng.integers(2, 10))
        rss = rng.uniform(-100.0, -60.0, size=(n_candidates, 25))
        rss[rng.random(rss.shape) < 0.6] = -np.inf
        table = VisibilityTable(rss=rss)
        tau = float(rng.uniform(0.0, 1.0))
        order = rng.permutation(n_candidates)
        previous = evaluate_deployment(table, [], tau)
        for k in range(1, n_candidates + 1):
            report = evaluate_deployment(table, order[:k], tau)
            assert report.covered_count >= previous.covered_count
            if previous.mean_top_rss is not None:
                assert report.mean_top_rss >= previous.mean_top_rss - 1e-12
            previous = report
