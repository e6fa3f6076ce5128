"""
Cached wrapper for visibility-table construction.
"""

import hashlib
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from rsuplan.core.coverage import build_visibility
from rsuplan.core.geometry import Scene
from rsuplan.core.models import CandidateSite, TileGrid, VisibilityTable
from rsuplan.core.radio import RadioParams
from rsuplan.utils.cache import ArtifactCache, generate_cache_key

logger = logging.getLogger(__name__)


class CachedVisibilityBuilder:
    """
    Cached wrapper for build_visibility.

    The LOS sweep dominates the run time of a plan, and sweeps rebuild the same table
    for every (τ, RSS_th) cell, so tables are stored keyed by their inputs.
    """

    def __init__(
        self,
        cache_dir: Optional[Path] = None,
        cache_ttl: Optional[int] = None,
        enable_cache: bool = True,
        workers: Optional[int] = None,
    ):
        """
        Initialize cached builder.

        Args:
            cache_dir: Cache directory (defaults to ~/.rsuplan/cache)
            cache_ttl: Entry lifetime in seconds; None keeps entries
            enable_cache: Whether to read and write the cache at all
            workers: Thread count passed to build_visibility
        """
        self.enable_cache = enable_cache
        self.workers = workers
        self.cache = ArtifactCache(cache_dir=cache_dir, default_ttl=cache_ttl) if enable_cache else None

    @staticmethod
    def table_key(
        scene: Scene,
        grid: TileGrid,
        candidates: Sequence[CandidateSite],
        params: RadioParams,
        strict: bool,
    ) -> str:
        """Cache key over everything the table depends on."""
        positions = np.array([c.position for c in candidates], dtype=float)
        return generate_cache_key(
            "visibility",
            scene=scene.digest(),
            candidates=hashlib.sha256(positions.tobytes()).hexdigest(),
            tiles=hashlib.sha256(grid.reference_centers.tobytes()).hexdigest(),
            radio=sorted(params.to_dict().items()),
            strict=strict,
        )

    def build(
        self,
        scene: Scene,
        grid: TileGrid,
        candidates: Sequence[CandidateSite],
        params: RadioParams,
        strict: bool = False,
    ) -> VisibilityTable:
        """
        Get the visibility table (cached).

        A stored entry whose shape no longer matches the candidates and grid is
        deleted and rebuilt.

        Args:
            scene: Scene
            grid: Tile grid
            candidates: Candidate sites
            params: Radio parameters
            strict: LOS strictness

        Returns:
            VisibilityTable
        """
        if self.cache is None:
            return build_visibility(scene, grid, candidates, params, strict, self.workers)

        fresh: List[VisibilityTable] = []

        def compute() -> VisibilityTable:
            logger.info("Computing fresh visibility table")
            fresh.append(build_visibility(scene, grid, candidates, params, strict, self.workers))
            return fresh[-1]

        key = self.table_key(scene, grid, candidates, params, strict)
        table = self.cache.get_or_compute(key, compute)
        if fresh:
            return table

        expected = (len(candidates), grid.n_reference)
        if not isinstance(table, VisibilityTable) or table.rss.shape != expected:
            logger.warning(f"Cached visibility table does not match {expected}; rebuilding")
            self.cache.delete(key)
            return self.cache.get_or_compute(key, compute)

        logger.info(f"Returning cached visibility table for scene {scene.digest()[:12]}")
        # Rebuild so the unpickled matrix is read-only again
        return VisibilityTable(table.rss, table.candidate_positions, table.tile_centers)

    def clear_cache(self, expired_only: bool = False) -> int:
        """
        Drop cached tables.

        Args:
            expired_only: Only drop entries past their lifetime (and unreadable ones)

        Returns:
            Number of entries removed
        """
        if self.cache is None:
            return 0
        if expired_only:
            return self.cache.clear_expired()
        return self.cache.clear()
