"""
Report generation for exporting candidates, deployments, tiles and sweeps.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from rsuplan.core.coverage import rss_cdf
from rsuplan.core.geometry import LocalProjection, Point2D
from rsuplan.core.models import CandidateSite, CoverageReport, Deployment, TileGrid

FLOAT_FORMAT = "%.6f"


def _coords(point: Point2D, projection: Optional[LocalProjection]) -> List[float]:
    if projection is None:
        return [round(point[0], 3), round(point[1], 3)]
    lon, lat = projection.to_lonlat(point[0], point[1])
    return [round(lon, 7), round(lat, 7)]


def _feature_collection(
    features: List[Dict[str, Any]],
    projection: Optional[LocalProjection],
) -> Dict[str, Any]:
    return {
        "type": "FeatureCollection",
        "frame": "wgs84" if projection is not None else "local-meters",
        "features": features,
    }


class ReportGenerator:
    """Write planning outputs in CSV, GeoJSON and JSON form; output is byte-stable."""

    @staticmethod
    def to_json(data: Dict[str, Any], output_path: Path) -> None:
        """
        Export data to JSON format.

        Args:
            data: Data to export
            output_path: Path to output file
        """
        with open(output_path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True, default=str)
            f.write("\n")

    @staticmethod
    def to_geojson(data: Dict[str, Any], output_path: Path) -> None:
        """Write a GeoJSON document."""
        with open(output_path, "w") as f:
            json.dump(data, f, indent=1, sort_keys=True)
            f.write("\n")

    @staticmethod
    def to_csv(rows: List[Dict[str, Any]], output_path: Path, columns: Optional[Sequence[str]] = None) -> None:
        """
        Export rows to CSV format.

        Args:
            rows: Records to export
            output_path: Path to output file
            columns: Column order; the keys of the first row when None
        """
        frame = pd.DataFrame(rows, columns=list(columns) if columns is not None else None)
        frame.to_csv(output_path, index=False, float_format=FLOAT_FORMAT)

    @staticmethod
    def candidates_frame(candidates: Sequence[CandidateSite]) -> pd.DataFrame:
        """Candidate table: id, x, y, kind and where on the road it came from."""
        return pd.DataFrame(
            [
                {
                    "id": c.id,
                    "x": c.x,
                    "y": c.y,
                    "kind": c.kind.value,
                    "component": c.source.component,
                    "ring": c.source.ring,
                    "vertex": c.source.index,
                }
                for c in candidates
            ],
            columns=["id", "x", "y", "kind", "component", "ring", "vertex"],
        )

    @staticmethod
    def candidates_to_csv(candidates: Sequence[CandidateSite], output_path: Path) -> None:
        """Export the candidate set as CSV."""
        ReportGenerator.candidates_frame(candidates).to_csv(
            output_path, index=False, float_format=FLOAT_FORMAT
        )

    @staticmethod
    def candidates_geojson(
        candidates: Sequence[CandidateSite],
        projection: Optional[LocalProjection] = None,
    ) -> Dict[str, Any]:
        """Candidate set as GeoJSON points."""
        features = [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": _coords(c.position, projection)},
                "properties": {"id": c.id, "kind": c.kind.value},
            }
            for c in candidates
        ]
        return _feature_collection(features, projection)

    @staticmethod
    def deployment_geojson(
        candidates: Sequence[CandidateSite],
        deployment: Optional[Deployment],
        projection: Optional[LocalProjection] = None,
    ) -> Dict[str, Any]:
        """
        Chosen sites as GeoJSON points.

        Args:
            candidates: Candidate set the deployment indexes into
            deployment: Deployment to export; None gives an empty collection
            projection: When given, coordinates are WGS84 lon/lat

        Returns:
            FeatureCollection with id, kind and phase per chosen site
        """
        features: List[Dict[str, Any]] = []
        if deployment is None:
            return _feature_collection(features, projection)
        for i in deployment.chosen:
            site = candidates[i]
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": _coords(site.position, projection)},
                    "properties": {
                        "id": site.id,
                        "kind": site.kind.value,
                        "phase": deployment.added_in_phase.get(i),
                        "algorithm": deployment.algorithm,
                    },
                }
            )
        return _feature_collection(features, projection)

    @staticmethod
    def tiles_frame(grid: TileGrid, report: CoverageReport) -> pd.DataFrame:
        """Per reference tile: center, best RSS (empty when uncovered) and coverage flag."""
        centers = grid.reference_centers
        best = report.best_rss
        covered = np.isfinite(best)
        return pd.DataFrame(
            {
                "x": centers[:, 0],
                "y": centers[:, 1],
                "best_rss_dbm": np.where(covered, best, np.nan),
                "covered": covered.astype(int),
            }
        )

    @staticmethod
    def tiles_to_csv(grid: TileGrid, report: CoverageReport, output_path: Path) -> None:
        """Export the per-tile RSS map as CSV."""
        ReportGenerator.tiles_frame(grid, report).to_csv(
            output_path, index=False, float_format=FLOAT_FORMAT
        )

    @staticmethod
    def cdf_to_csv(report: CoverageReport, output_path: Path) -> None:
        """Export the RSS CDF over covered tiles as sorted (rss, cumulative fraction) rows."""
        values, fractions = rss_cdf(report)
        pd.DataFrame({"rss_dbm": values, "cumulative_fraction": fractions}).to_csv(
            output_path, index=False, float_format=FLOAT_FORMAT
        )

    @staticmethod
    def trace_to_csv(trace: List[Dict[str, Any]], output_path: Path) -> None:
        """Export a solver trace (GA generations or agile phase steps)."""
        ReportGenerator.to_csv(trace, output_path)
