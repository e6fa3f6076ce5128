"""
Tile grid, candidate-to-tile visibility and the coverage / mean-RSS evaluators.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from rsuplan.core.config import PlanningConfig, required_tiles
from rsuplan.core.exceptions import (
    EmptyGridError,
    InvalidParameterError,
    NoCandidatesError,
    UnknownCandidateError,
)
from rsuplan.core.geometry import Scene, blocked_mask, contains_points
from rsuplan.core.models import CandidateSite, CoverageReport, TileGrid, VisibilityTable
from rsuplan.core.radio import RadioParams, rss_dbm

logger = logging.getLogger(__name__)


def build_grid(scene: Scene, tile_size: float = 4.0, border_margin: float = 50.0) -> TileGrid:
    """
    Lay square tiles over the area of interest and mark the road tiles.

    The area of interest is the map shrunk by ``border_margin`` on every side. Tile
    centers sit at ``x0 + (i + 0.5)·tile``; partial tiles at the far edges are dropped.

    Args:
        scene: Scene holding the road surface
        tile_size: Tile edge in meters
        border_margin: Margin removed from each side in meters

    Returns:
        TileGrid whose reference tiles have their centers on the road

    Raises:
        InvalidParameterError: If tile_size <= 0 or border_margin < 0
        EmptyGridError: If the area of interest holds no full tile
    """
    if tile_size <= 0:
        raise InvalidParameterError("tile_size", tile_size, "must be positive")
    if border_margin < 0:
        raise InvalidParameterError("border_margin", border_margin, "must be >= 0")

    x0, y0 = border_margin, border_margin
    x1, y1 = scene.width - border_margin, scene.height - border_margin
    cols = int(math.floor((x1 - x0) / tile_size + 1e-9)) if x1 > x0 else 0
    rows = int(math.floor((y1 - y0) / tile_size + 1e-9)) if y1 > y0 else 0
    if cols <= 0 or rows <= 0:
        raise EmptyGridError(
            f"No tiles fit in the area of interest ({scene.width:g}x{scene.height:g} m map, "
            f"margin {border_margin:g} m, tile {tile_size:g} m)"
        )

    xs = x0 + (np.arange(cols) + 0.5) * tile_size
    ys = y0 + (np.arange(rows) + 0.5) * tile_size
    gx, gy = np.meshgrid(xs, ys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    reference = np.flatnonzero(contains_points(scene.road_shape, centers))

    if reference.size == 0:
        logger.warning("No tile center lies on the road surface")
    logger.info(f"Grid {rows}x{cols} = {centers.shape[0]} tiles, {reference.size} on the road")

    return TileGrid(
        tile_size=float(tile_size),
        area_of_interest=(x0, y0, x1, y1),
        centers=centers,
        reference_indices=reference,
        shape=(rows, cols),
    )


def _candidate_row(
    scene: Scene,
    origin: Tuple[float, float],
    targets: np.ndarray,
    params: RadioParams,
    strict: bool,
) -> np.ndarray:
    blocked = blocked_mask(scene, origin, targets, strict=strict)
    distance = np.hypot(targets[:, 0] - origin[0], targets[:, 1] - origin[1])
    return np.where(blocked, -np.inf, rss_dbm(params, distance))


def build_visibility(
    scene: Scene,
    grid: TileGrid,
    candidates: Sequence[CandidateSite],
    params: Optional[RadioParams] = None,
    strict: bool = False,
    workers: Optional[int] = None,
) -> VisibilityTable:
    """
    LOS and RSS between every candidate and every reference tile center.

    Rows are computed in a thread pool and gathered in candidate order, so the table
    does not depend on scheduling.

    Args:
        scene: Scene holding the buildings
        grid: Tile grid
        candidates: Candidate sites
        params: Radio parameters (defaults when None)
        strict: Count boundary contact as blockage
        workers: Thread count; None lets the executor decide

    Returns:
        VisibilityTable of shape (|C|, |N|)

    Raises:
        NoCandidatesError: If the candidate list is empty
    """
    if not candidates:
        raise NoCandidatesError()
    params = params or RadioParams()
    targets = grid.reference_centers
    positions = np.array([c.position for c in candidates], dtype=float)

    if targets.shape[0] == 0:
        rows: List[np.ndarray] = [np.empty(0) for _ in candidates]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(
                    lambda p: _candidate_row(scene, (p[0], p[1]), targets, params, strict),
                    positions,
                )
            )

    table = VisibilityTable(
        rss=np.vstack(rows) if rows else np.empty((0, targets.shape[0])),
        candidate_positions=positions,
        tile_centers=targets,
    )
    logger.info(
        f"Visibility table {table.n_candidates}x{table.n_reference}, "
        f"{int(table.los.sum())} LOS links"
    )
    return table


def top_mean(best_rss: np.ndarray, required: int) -> Optional[float]:
    """
    Mean of the ``required`` largest values, or None when undefined.

    Undefined means nothing is required or the top values include an uncovered tile.
    """
    if required <= 0 or best_rss.size < required:
        return None
    top = np.sort(best_rss)[best_rss.size - required :]
    if not np.isfinite(top[0]):
        return None
    return float(top.mean())


def _check_ids(table: VisibilityTable, deployed: Iterable[int]) -> List[int]:
    ids = sorted(set(int(i) for i in deployed))
    for i in ids:
        if not 0 <= i < table.n_candidates:
            raise UnknownCandidateError(i, table.n_candidates)
    return ids


def report_from_best(
    best_rss: np.ndarray,
    tau: float,
    rss_th_dbm: Optional[float],
) -> CoverageReport:
    """
    Constraint evaluation from per-tile best RSS values.

    Args:
        best_rss: Per reference tile best RSS, -inf when uncovered
        tau: Tolerance
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        CoverageReport
    """
    n_reference = int(best_rss.size)
    required = required_tiles(tau, n_reference)
    covered_mask = np.isfinite(best_rss)
    covered = int(covered_mask.sum())
    mean_top = top_mean(best_rss, required)
    mean_covered = float(best_rss[covered_mask].mean()) if covered else None

    coverage_ok = covered >= required
    if rss_th_dbm is None or required == 0:
        rss_ok = True
    else:
        rss_ok = coverage_ok and mean_top is not None and mean_top >= rss_th_dbm

    return CoverageReport(
        n_reference=n_reference,
        required_count=required,
        covered_count=covered,
        best_rss=best_rss,
        mean_top_rss=mean_top,
        mean_covered_rss=mean_covered,
        coverage_ok=coverage_ok,
        rss_ok=rss_ok,
    )


def best_rss_of(table: VisibilityTable, ids: Sequence[int]) -> np.ndarray:
    """Per-tile max RSS over the given candidates (-inf where none sees the tile)."""
    if len(ids) == 0:
        return np.full(table.n_reference, -np.inf)
    return table.rss[list(ids)].max(axis=0)


def evaluate_deployment(
    table: VisibilityTable,
    deployed: Iterable[int],
    tau: float,
    rss_th_dbm: Optional[float] = None,
) -> CoverageReport:
    """
    Score a deployment against the coverage and mean-RSS constraints.

    A tile is covered when at least one deployed candidate sees it. The mean-RSS
    statistic averages the ⌈τ|N|⌉ largest per-tile best RSS values, uncovered tiles
    ranking as -inf.

    Args:
        table: Visibility table
        deployed: Deployed candidate ids
        tau: Tolerance in [0, 1]
        rss_th_dbm: Mean-RSS threshold, None when disabled

    Returns:
        CoverageReport

    Raises:
        UnknownCandidateError: If an id is outside C
        InvalidParameterError: If tau is outside [0, 1]
    """
    if not 0.0 <= tau <= 1.0:
        raise InvalidParameterError("tau", tau, "must be in [0, 1]")
    ids = _check_ids(table, deployed)
    return report_from_best(best_rss_of(table, ids), tau, rss_th_dbm)


def verify_deployment(
    scene: Scene,
    grid: TileGrid,
    candidates: Sequence[CandidateSite],
    deployed: Iterable[int],
    config: PlanningConfig,
) -> CoverageReport:
    """
    Re-evaluate a deployment from geometry, without reusing any solver table.

    Args:
        scene: Scene
        grid: Tile grid
        candidates: Full candidate list
        deployed: Deployed ids
        config: Planning configuration

    Returns:
        CoverageReport computed from fresh LOS tests
    """
    ids = sorted(set(int(i) for i in deployed))
    for i in ids:
        if not 0 <= i < len(candidates):
            raise UnknownCandidateError(i, len(candidates))
    if not ids:
        return report_from_best(np.full(grid.n_reference, -np.inf), config.tau, config.rss_th_dbm)
    sub = build_visibility(
        scene,
        grid,
        [candidates[i] for i in ids],
        config.radio,
        strict=config.strict_boundary,
        workers=config.workers,
    )
    return report_from_best(best_rss_of(sub, range(len(ids))), config.tau, config.rss_th_dbm)


def rss_cdf(report: CoverageReport) -> Tuple[np.ndarray, np.ndarray]:
    """
    Empirical CDF of the best RSS over covered reference tiles.

    Returns:
        (sorted RSS values, cumulative fractions ending at 1.0); empty when nothing is covered
    """
    values = np.sort(report.best_rss[np.isfinite(report.best_rss)])
    if values.size == 0:
        return values, np.empty(0)
    fractions = np.arange(1, values.size + 1, dtype=float) / values.size
    return values, fractions
