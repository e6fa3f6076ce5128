"""
Planning pipeline - scene file to verified deployment, sweeps and external scoring.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import pandas as pd

from rsuplan.core.baselines import solve_exhaustive, solve_ga, solve_gc
from rsuplan.core.cached_visibility import CachedVisibilityBuilder
from rsuplan.core.candidates import assemble_candidates
from rsuplan.core.config import Algorithm, PlanningConfig, sweep_cells
from rsuplan.core.coverage import build_grid, verify_deployment
from rsuplan.core.exceptions import (
    InfeasibleDeploymentError,
    InvalidParameterError,
    SceneFileError,
    StageError,
)
from rsuplan.core.geometry import Scene
from rsuplan.core.models import (
    CandidateSite,
    Deployment,
    RunResult,
    TileGrid,
    VisibilityTable,
)
from rsuplan.core.placement import solve_agile
from rsuplan.core.scene_file import load_scene
from rsuplan.exporters.report_generator import ReportGenerator

logger = logging.getLogger(__name__)

DETERMINISTIC = (Algorithm.AGILE, Algorithm.GC, Algorithm.EXHAUSTIVE)

SWEEP_COLUMNS = [
    "scene",
    "algorithm",
    "tau",
    "rss_th",
    "seed",
    "status",
    "n_candidates",
    "n_deployed",
    "coverage_rate",
    "mean_top_rss_dbm",
    "mean_covered_rss_dbm",
    "coverage_ok",
    "rss_ok",
    "runtime_s",
    "error",
]


@contextmanager
def stage(name: str, timings: Dict[str, float]) -> Iterator[None]:
    """
    Time a pipeline stage and tag its failures with the stage name.

    Infeasibility passes through untouched; it is an outcome, not a crash.
    """
    start = time.perf_counter()
    try:
        yield
    except (InfeasibleDeploymentError, StageError):
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def rss_label(rss_th_dbm: Optional[float]) -> str:
    """Sweep-table label for a threshold."""
    return "disabled" if rss_th_dbm is None else f"{rss_th_dbm:g}"


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


@dataclass
class PreparedScene:
    """Everything a solver needs that does not depend on τ, RSS_th or the algorithm."""

    name: str
    scene: Scene
    candidates: List[CandidateSite]
    grid: TileGrid
    table: VisibilityTable
    stage_seconds: Dict[str, float] = field(default_factory=dict)


class PlanningPipeline:
    """
    Runs the planning stages: candidates, grid, visibility, solve, verify, export.

    This is the main interface for planning runs from the CLI and from sweeps.
    """

    def __init__(
        self,
        config: Optional[PlanningConfig] = None,
        cache_dir: Optional[Path] = None,
    ):
        """
        Initialize pipeline.

        Args:
            config: Planning configuration (defaults when None)
            cache_dir: Visibility cache directory, used when caching is enabled
        """
        self.config = config or PlanningConfig()
        self.visibility = CachedVisibilityBuilder(
            cache_dir=cache_dir,
            enable_cache=self.config.cache_enabled,
            workers=self.config.workers,
        )

    def load(self, scene_file: Path) -> Tuple[Scene, Dict[str, float]]:
        """Read a scene file as the first timed stage."""
        timings: Dict[str, float] = {}
        with stage("load_scene", timings):
            scene = load_scene(scene_file)
        return scene, timings

    def prepare(self, scene: Scene, name: str = "scene") -> PreparedScene:
        """
        Candidates, tile grid and visibility table for a scene.

        Args:
            scene: Scene
            name: Label carried into results

        Returns:
            PreparedScene with per-stage timings
        """
        timings: Dict[str, float] = {}
        with stage("candidates", timings):
            candidates = assemble_candidates(scene, self.config)
        with stage("grid", timings):
            grid = build_grid(scene, self.config.tile_size_m, self.config.border_margin_m)
        with stage("visibility", timings):
            table = self.visibility.build(
                scene, grid, candidates, self.config.radio, self.config.strict_boundary
            )
        return PreparedScene(name, scene, candidates, grid, table, timings)

    @staticmethod
    def solve(prepared: PreparedScene, config: PlanningConfig) -> Deployment:
        """
        Dispatch to the configured solver.

        Raises:
            InfeasibleDeploymentError: If the solver cannot satisfy the constraints
        """
        table, tau, rss_th = prepared.table, config.tau, config.rss_th_dbm
        if config.algorithm is Algorithm.AGILE:
            return solve_agile(prepared.scene, prepared.candidates, config, table=table)
        if config.algorithm is Algorithm.GC:
            return solve_gc(table, tau, rss_th)
        if config.algorithm is Algorithm.GA:
            return solve_ga(table, tau, rss_th, config.ga_config())
        return solve_exhaustive(table, tau, rss_th, config.max_exhaustive_candidates)

    def run_prepared(
        self,
        prepared: PreparedScene,
        config: Optional[PlanningConfig] = None,
        output_dir: Optional[Path] = None,
    ) -> RunResult:
        """
        Solve, re-check from geometry and export one configuration.

        Args:
            prepared: Output of prepare
            config: Overrides the pipeline configuration for this run
            output_dir: Where to write exports; nothing is written when None

        Returns:
            RunResult whose status is feasible, infeasible or error
        """
        config = config or self.config
        timings = dict(prepared.stage_seconds)
        result = RunResult(
            scene=prepared.name,
            algorithm=config.algorithm.value,
            config=config.to_dict(),
            n_candidates=len(prepared.candidates),
            status="error",
            stage_seconds=timings,
        )

        try:
            with stage("solve", timings):
                deployment = self.solve(prepared, config)
        except InfeasibleDeploymentError as e:
            logger.warning(f"{prepared.name}/{config.algorithm.value}: {e}")
            result.status = "infeasible"
            result.error = str(e)
            result.infeasibility = {
                "reason": e.reason,
                "best_coverage_rate": e.coverage_rate,
                "best_mean_top_rss": _finite_or_none(e.mean_top_rss),
                "best_fitness": _finite_or_none(e.best_fitness),
            }
        else:
            with stage("verify", timings):
                report = verify_deployment(
                    prepared.scene, prepared.grid, prepared.candidates, deployment.chosen, config
                )
            if report.covered_count != deployment.report.covered_count:
                logger.warning(
                    f"Solver reported {deployment.report.covered_count} covered tiles, "
                    f"re-check found {report.covered_count}"
                )

            result.deployment = deployment
            result.report = report
            result.status = "feasible" if report.feasible else "infeasible"
            if not report.feasible:
                result.error = (
                    f"constraints unmet (coverage {report.coverage_ok}, mean RSS {report.rss_ok})"
                )

        if output_dir is not None:
            with stage("export", timings):
                result.output_dir = self.export(prepared, result, Path(output_dir))
        return result

    @staticmethod
    def export(prepared: PreparedScene, result: RunResult, output_dir: Path) -> Path:
        """
        Write deployment GeoJSON, tile CSV, RSS CDF CSV, trace CSV and the summary.

        A run without a deployment still gets the candidates, an empty GeoJSON
        collection and its summary; the tile, CDF and trace files are skipped.

        Returns:
            The output directory
        """
        output_dir.mkdir(parents=True, exist_ok=True)
        projection = prepared.scene.projection
        ReportGenerator.to_geojson(
            ReportGenerator.deployment_geojson(prepared.candidates, result.deployment, projection),
            output_dir / "deployment.geojson",
        )
        if result.deployment is not None and result.report is not None:
            ReportGenerator.tiles_to_csv(prepared.grid, result.report, output_dir / "tiles.csv")
            ReportGenerator.cdf_to_csv(result.report, output_dir / "rss_cdf.csv")
            if result.deployment.trace:
                ReportGenerator.trace_to_csv(result.deployment.trace, output_dir / "trace.csv")
        ReportGenerator.candidates_to_csv(prepared.candidates, output_dir / "candidates.csv")

        summary = result.to_dict()
        summary["scene_digest"] = prepared.scene.digest()
        ReportGenerator.to_json(summary, output_dir / "summary.json")
        logger.info(f"Wrote run outputs to {output_dir}")
        return output_dir

    def run_sweep(
        self,
        prepared: PreparedScene,
        taus: Sequence[float],
        rss_thresholds: Sequence[Optional[float]],
        algorithms: Sequence[Algorithm],
        seeds: Sequence[int] = (0,),
        output_dir: Optional[Path] = None,
        workers: int = 1,
    ) -> Tuple[pd.DataFrame, List[RunResult]]:
        """
        Run every (τ, RSS_th, algorithm, seed) cell on one prepared scene.

        Deterministic solvers run once per cell with the first seed. A failing cell is
        recorded in its row and the sweep carries on.

        Args:
            prepared: Output of prepare
            taus: Tolerances
            rss_thresholds: Thresholds, None for disabled
            algorithms: Solvers
            seeds: Seeds for the GA
            output_dir: Root for cell-scoped outputs and sweep.csv
            workers: Cells run concurrently on this many threads

        Returns:
            (sweep table, run results) in cell order

        Raises:
            InvalidParameterError: If any list is empty
        """
        for name, values in (
            ("taus", taus),
            ("rss_thresholds", rss_thresholds),
            ("algorithms", algorithms),
            ("seeds", seeds),
        ):
            if len(values) == 0:
                raise InvalidParameterError(name, list(values), "must not be empty")

        jobs: List[Tuple[PlanningConfig, int]] = []
        for tau, rss_th in sweep_cells(list(taus), list(rss_thresholds)):
            for algorithm in algorithms:
                run_seeds = seeds[:1] if algorithm in DETERMINISTIC else seeds
                for seed in run_seeds:
                    cell = replace(
                        self.config, tau=tau, rss_th_dbm=rss_th, algorithm=algorithm, seed=seed
                    )
                    jobs.append((cell, seed))

        def run_cell(job: Tuple[PlanningConfig, int]) -> RunResult:
            cell, seed = job
            cell_dir = None
            if output_dir is not None:
                cell_dir = (
                    Path(output_dir)
                    / f"tau{cell.tau:g}_rss{rss_label(cell.rss_th_dbm)}_{cell.algorithm.value}_seed{seed}"
                )
            try:
                return self.run_prepared(prepared, cell, cell_dir)
            except Exception as e:
                logger.error(f"Sweep cell failed ({cell.algorithm.value}, tau {cell.tau}): {e}")
                return RunResult(
                    scene=prepared.name,
                    algorithm=cell.algorithm.value,
                    config=cell.to_dict(),
                    n_candidates=len(prepared.candidates),
                    status="error",
                    error=str(e),
                )

        logger.info(f"Sweep over {len(jobs)} cells on {prepared.name}")
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(run_cell, jobs))

        rows = [self.sweep_row(result, cell.tau, cell.rss_th_dbm, seed) for (cell, seed), result in zip(jobs, results)]
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        if output_dir is not None:
            Path(output_dir).mkdir(parents=True, exist_ok=True)
            frame.to_csv(Path(output_dir) / "sweep.csv", index=False, float_format="%.6f")
        return frame, results

    @staticmethod
    def sweep_row(result: RunResult, tau: float, rss_th: Optional[float], seed: int) -> Dict:
        """One sweep table row."""
        report = result.report
        solve_time = result.stage_seconds.get("solve", 0.0) + result.stage_seconds.get("verify", 0.0)
        return {
            "scene": result.scene,
            "algorithm": result.algorithm,
            "tau": tau,
            "rss_th": rss_label(rss_th),
            "seed": seed,
            "status": result.status,
            "n_candidates": result.n_candidates,
            "n_deployed": result.n_deployed,
            "coverage_rate": report.coverage_rate if report else None,
            "mean_top_rss_dbm": report.mean_top_rss if report else None,
            "mean_covered_rss_dbm": report.mean_covered_rss if report else None,
            "coverage_ok": report.coverage_ok if report else None,
            "rss_ok": report.rss_ok if report else None,
            "runtime_s": solve_time,
            "error": result.error,
        }


def run_plan(
    scene_file: Path,
    config: Optional[PlanningConfig] = None,
    output_dir: Optional[Path] = None,
    cache_dir: Optional[Path] = None,
) -> RunResult:
    """
    Full pipeline on one scene file.

    Args:
        scene_file: Scene file path
        config: Planning configuration
        output_dir: Where to write exports
        cache_dir: Visibility cache directory

    Returns:
        RunResult (infeasible plans are a status, not an exception)

    Raises:
        StageError: If a stage other than solving fails; names the stage
    """
    pipeline = PlanningPipeline(config, cache_dir=cache_dir)
    scene, timings = pipeline.load(scene_file)
    prepared = pipeline.prepare(scene, name=Path(scene_file).stem)
    prepared.stage_seconds.update(timings)
    return pipeline.run_prepared(prepared, output_dir=output_dir)


def run_sweep(
    scene_file: Path,
    taus: Sequence[float],
    rss_thresholds: Sequence[Optional[float]],
    algorithms: Sequence[Algorithm],
    seeds: Sequence[int] = (0,),
    config: Optional[PlanningConfig] = None,
    output_dir: Optional[Path] = None,
    workers: int = 1,
    cache_dir: Optional[Path] = None,
) -> pd.DataFrame:
    """
    Cross-product sweep on one scene file; see PlanningPipeline.run_sweep.

    Returns:
        Sweep table with one row per executed cell
    """
    if len(algorithms) == 0:
        raise InvalidParameterError("algorithms", [], "must not be empty")
    pipeline = PlanningPipeline(config, cache_dir=cache_dir)
    scene, _ = pipeline.load(scene_file)
    prepared = pipeline.prepare(scene, name=Path(scene_file).stem)
    frame, _ = pipeline.run_sweep(
        prepared, taus, rss_thresholds, algorithms, seeds, output_dir, workers
    )
    return frame


def load_deployment_ids(path: Path) -> List[int]:
    """
    Read candidate ids from a deployment GeoJSON (``properties.id``) or a CSV with an ``id`` column.

    Raises:
        SceneFileError: If the file cannot be read or carries no ids
    """
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            frame = pd.read_csv(path)
            if "id" not in frame.columns:
                raise SceneFileError(str(path), "CSV needs an 'id' column")
            return sorted(int(i) for i in frame["id"].tolist())
        with open(path) as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise SceneFileError(str(path), f"cannot read deployment: {e}") from e

    try:
        return sorted(int(feature["properties"]["id"]) for feature in data.get("features", []))
    except (KeyError, TypeError, ValueError) as e:
        raise SceneFileError(str(path), "every feature needs properties.id") from e


def evaluate_external(
    scene_file: Path,
    deployment_file: Path,
    config: Optional[PlanningConfig] = None,
    output_dir: Optional[Path] = None,
) -> RunResult:
    """
    Score an externally supplied deployment on a scene.

    Candidate ids refer to the candidate set the configuration generates for the
    scene, as written by the ``candidates`` command.

    Args:
        scene_file: Scene file path
        deployment_file: Deployment GeoJSON or CSV of ids
        config: Planning configuration
        output_dir: Where to write exports

    Returns:
        RunResult with algorithm "external"
    """
    config = config or PlanningConfig()
    pipeline = PlanningPipeline(config)
    scene, timings = pipeline.load(scene_file)
    with stage("read_deployment", timings):
        ids = load_deployment_ids(deployment_file)
    with stage("candidates", timings):
        candidates = assemble_candidates(scene, config)
    with stage("grid", timings):
        grid = build_grid(scene, config.tile_size_m, config.border_margin_m)
    with stage("verify", timings):
        report = verify_deployment(scene, grid, candidates, ids, config)

    deployment = Deployment.from_ids(ids, len(candidates), report, "external")
    result = RunResult(
        scene=Path(scene_file).stem,
        algorithm="external",
        config=config.to_dict(),
        n_candidates=len(candidates),
        status="feasible" if report.feasible else "infeasible",
        deployment=deployment,
        report=report,
        stage_seconds=timings,
    )
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        ReportGenerator.tiles_to_csv(grid, report, out / "tiles.csv")
        ReportGenerator.cdf_to_csv(report, out / "rss_cdf.csv")
        ReportGenerator.to_json(result.to_dict(), out / "summary.json")
        result.output_dir = out
    return result


def reduction_summary(sweep: pd.DataFrame, reference: str = Algorithm.AGILE.value) -> pd.DataFrame:
    """
    RSU counts of every other algorithm relative to the reference, per (scene, τ, RSS_th).

    Only feasible rows count; GA rows are averaged over seeds.

    Args:
        sweep: Table from run_sweep
        reference: Algorithm to compare against

    Returns:
        Columns scene, tau, rss_th, algorithm, n_deployed, reference_n_deployed,
        ratio (other / reference) and reduction_pct (100 · (1 − reference / other))
    """
    columns = [
        "scene",
        "tau",
        "rss_th",
        "algorithm",
        "n_deployed",
        "reference_n_deployed",
        "ratio",
        "reduction_pct",
    ]
    feasible = sweep[sweep["status"] == "feasible"]
    if feasible.empty:
        return pd.DataFrame(columns=columns)

    means = (
        feasible.groupby(["scene", "tau", "rss_th", "algorithm"], sort=True)["n_deployed"]
        .mean()
        .reset_index()
    )
    ref = means[means["algorithm"] == reference].rename(
        columns={"n_deployed": "reference_n_deployed"}
    ).drop(columns="algorithm")
    others = means[means["algorithm"] != reference]
    merged = others.merge(ref, on=["scene", "tau", "rss_th"], how="inner")

    merged["ratio"] = merged["n_deployed"] / merged["reference_n_deployed"].where(
        merged["reference_n_deployed"] > 0
    )
    merged["reduction_pct"] = 100.0 * (
        1.0 - merged["reference_n_deployed"] / merged["n_deployed"].where(merged["n_deployed"] > 0)
    )
    return merged[columns].reset_index(drop=True)


__all__ = [
    "PlanningPipeline",
    "PreparedScene",
    "evaluate_external",
    "load_deployment_ids",
    "reduction_summary",
    "run_plan",
    "run_sweep",
    "stage",
]
