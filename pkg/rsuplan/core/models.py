"""
Data models for candidate sites, tile grids, visibility and deployments.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from rsuplan.core.geometry import Point2D


class CandidateKind(Enum):
    """Provenance of a candidate RSU position."""

    CORNER = "corner"
    LONG_ROAD = "longRoad"


@dataclass(frozen=True)
class SiteRef:
    """Where on the road surface a candidate came from."""

    component: int  # index into Scene.road_region
    ring: int  # 0 = outer ring, k = hole k-1
    index: int  # vertex index (corner) or section start vertex (long road)


@dataclass(frozen=True)
class CandidateSite:
    """A potential RSU position; ids are dense 0..|C|-1."""

    id: int
    position: Point2D
    kind: CandidateKind
    source: SiteRef

    @property
    def x(self) -> float:
        """Easting in map-local meters."""
        return self.position[0]

    @property
    def y(self) -> float:
        """Northing in map-local meters."""
        return self.position[1]


@dataclass(frozen=True, eq=False)
class TileGrid:
    """Square tiles over the area of interest; reference tiles N lie on the road."""

    tile_size: float
    area_of_interest: Tuple[float, float, float, float]  # (x0, y0, x1, y1)
    centers: np.ndarray  # (|Z|, 2)
    reference_indices: np.ndarray  # indices into centers, ascending
    shape: Tuple[int, int]  # (rows, cols)

    @property
    def n_tiles(self) -> int:
        """|Z|."""
        return int(self.centers.shape[0])

    @property
    def n_reference(self) -> int:
        """|N|."""
        return int(self.reference_indices.shape[0])

    @property
    def reference_centers(self) -> np.ndarray:
        """Centers of the reference tiles, in column order of the visibility table."""
        return self.centers[self.reference_indices]


@dataclass(eq=False)
class VisibilityTable:
    """
    LOS and RSS between every candidate and every reference tile.

    ``rss[i, n]`` is the RSS of tile n from candidate i in dBm, or -inf when the
    link is blocked. The matrix is read-only once built.
    """

    rss: np.ndarray
    candidate_positions: Optional[np.ndarray] = None
    tile_centers: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        rss = np.array(self.rss, dtype=float, copy=True)
        if rss.ndim != 2:
            raise ValueError(f"RSS matrix must be 2-D, got shape {rss.shape}")
        rss.setflags(write=False)
        self.rss = rss

    @property
    def n_candidates(self) -> int:
        """|C|."""
        return int(self.rss.shape[0])

    @property
    def n_reference(self) -> int:
        """|N|."""
        return int(self.rss.shape[1])

    @cached_property
    def los(self) -> np.ndarray:
        """Boolean LOS matrix."""
        return np.isfinite(self.rss)

    def los_tiles(self, candidate: int) -> np.ndarray:
        """Reference tiles in LOS of a candidate (K_i), ascending."""
        return np.flatnonzero(self.los[candidate])


@dataclass(frozen=True, eq=False)
class CoverageReport:
    """Feasibility metrics for one deployment."""

    n_reference: int
    required_count: int
    covered_count: int
    best_rss: np.ndarray  # per reference tile, -inf when uncovered
    mean_top_rss: Optional[float]
    mean_covered_rss: Optional[float]
    coverage_ok: bool
    rss_ok: bool

    @property
    def coverage_rate(self) -> float:
        """Covered fraction of N (1.0 for an empty N)."""
        if self.n_reference == 0:
            return 1.0
        return self.covered_count / self.n_reference

    @property
    def feasible(self) -> bool:
        """Both constraints hold."""
        return self.coverage_ok and self.rss_ok

    def to_dict(self) -> Dict[str, Any]:
        """Scalar metrics for summaries."""
        return {
            "n_reference": self.n_reference,
            "required_count": self.required_count,
            "covered_count": self.covered_count,
            "coverage_rate": self.coverage_rate,
            "mean_top_rss_dbm": self.mean_top_rss,
            "mean_covered_rss_dbm": self.mean_covered_rss,
            "coverage_ok": self.coverage_ok,
            "rss_ok": self.rss_ok,
        }


@dataclass(eq=False)
class ServiceList:
    """Per candidate, the RSS-descending tiles k_i′ it can serve within the threshold."""

    tiles: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.tiles)

    def lengths(self) -> np.ndarray:
        """|k_i′| per candidate."""
        return np.array([t.size for t in self.tiles], dtype=int)


@dataclass(eq=False)
class Deployment:
    """Selection vector e over C; D are the chosen ids, R the rejected ones."""

    selection: Tuple[bool, ...]
    report: CoverageReport
    algorithm: str
    added_in_phase: Dict[int, int] = field(default_factory=dict)
    trace: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_ids(
        cls,
        ids: Iterable[int],
        n_candidates: int,
        report: CoverageReport,
        algorithm: str,
        added_in_phase: Optional[Dict[int, int]] = None,
        trace: Optional[List[Dict[str, Any]]] = None,
    ) -> "Deployment":
        """
        Build from a set of chosen ids.

        Args:
            ids: Chosen candidate ids
            n_candidates: |C|
            report: Coverage report of the chosen set
            algorithm: Solver name
            added_in_phase: Optional phase number per chosen id
            trace: Optional solver trace rows

        Returns:
            Deployment
        """
        chosen = set(int(i) for i in ids)
        selection = tuple(i in chosen for i in range(n_candidates))
        return cls(
            selection=selection,
            report=report,
            algorithm=algorithm,
            added_in_phase=dict(added_in_phase or {}),
            trace=list(trace or []),
        )

    @property
    def chosen(self) -> List[int]:
        """D, ascending."""
        return [i for i, e in enumerate(self.selection) if e]

    @property
    def rejected(self) -> List[int]:
        """R, ascending."""
        return [i for i, e in enumerate(self.selection) if not e]

    @property
    def objective(self) -> int:
        """Σ e_i = |D|."""
        return sum(self.selection)

    @property
    def feasible(self) -> bool:
        """Whether the attached report satisfies both constraints."""
        return self.report.feasible


@dataclass
class RunResult:
    """Outcome of one planning run."""

    scene: str
    algorithm: str
    config: Dict[str, Any]
    n_candidates: int
    status: str  # "feasible", "infeasible" or "error"
    deployment: Optional[Deployment] = None
    report: Optional[CoverageReport] = None
    stage_seconds: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None
    # Reason and best achieved metrics when the solver gave up
    infeasibility: Optional[Dict[str, Any]] = None
    output_dir: Optional[Path] = None

    @property
    def n_deployed(self) -> Optional[int]:
        """|D|, when a deployment exists."""
        return self.deployment.objective if self.deployment is not None else None

    @property
    def coverage_rate(self) -> Optional[float]:
        """Covered fraction of N."""
        return self.report.coverage_rate if self.report is not None else None

    @property
    def mean_top_rss(self) -> Optional[float]:
        """Mean of the best ⌈τ|N|⌉ per-tile RSS values."""
        return self.report.mean_top_rss if self.report is not None else None

    @property
    def feasible(self) -> bool:
        """Both constraints verified by the independent re-check."""
        return self.status == "feasible"

    @property
    def runtime_seconds(self) -> float:
        """Wall clock over all stages."""
        return float(sum(self.stage_seconds.values()))

    def to_dict(self) -> Dict[str, Any]:
        """Summary record."""
        data: Dict[str, Any] = {
            "scene": self.scene,
            "algorithm": self.algorithm,
            "status": self.status,
            "n_candidates": self.n_candidates,
            "n_deployed": self.n_deployed,
            "chosen": self.deployment.chosen if self.deployment is not None else [],
            "added_in_phase": (
                {str(k): v for k, v in sorted(self.deployment.added_in_phase.items())}
                if self.deployment is not None
                else {}
            ),
            "stage_seconds": dict(self.stage_seconds),
            "error": self.error,
            "config": self.config,
        }
        if self.infeasibility is not None:
            data["infeasibility"] = dict(self.infeasibility)
        if self.report is not None:
            data.update(self.report.to_dict())
        return data
