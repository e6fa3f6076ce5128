"""
Main CLI entry point for rsuplan.
"""

import functools
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, List, Optional

import click
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from rsuplan import __version__
from rsuplan.core.cached_visibility import CachedVisibilityBuilder
from rsuplan.core.candidates import assemble_candidates
from rsuplan.core.config import (
    SWEEP_RSS_THRESHOLDS,
    SWEEP_TAUS,
    Algorithm,
    PlanningConfig,
    dump_config,
    load_config,
    parse_rss_threshold,
)
from rsuplan.core.geometry import Scene
from rsuplan.core.models import CandidateKind, RunResult
from rsuplan.core.osm_parser import GeoWindow, ingest_osm
from rsuplan.core.pipeline import evaluate_external, reduction_summary, run_plan, run_sweep
from rsuplan.core.scene_builder import (
    build_scene,
    generate_irregular_scene,
    generate_synthetic_grid,
    split_scene,
)
from rsuplan.core.scene_file import load_scene, save_scene
from rsuplan.exporters.report_generator import ReportGenerator
from rsuplan.utils.formatters import (
    format_dbm,
    format_meters,
    format_percentage,
    format_threshold,
)

console = Console()

EXIT_OK = 0
EXIT_CRASH = 1
EXIT_INFEASIBLE = 2


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def planning_options(func: Callable) -> Callable:
    """Options shared by every command that builds a PlanningConfig."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="YAML planning configuration; flags override its values"),
        click.option("--tau", type=float, help="Coverage tolerance τ in [0, 1]"),
        click.option("--rss-th", "rss_th", type=str,
                     help="Mean-RSS threshold in dBm, or 'inf'/'disabled'"),
        click.option("--rsu-threshold", type=float, help="Long-road spacing RSU_t in meters"),
        click.option("--tile-size", type=float, help="Tile edge in meters"),
        click.option("--border-margin", type=float, help="Margin excluded at the map border, meters"),
        click.option("--angle-threshold", type=float, help="Corner turning-angle threshold, degrees"),
        click.option("--algorithm", type=click.Choice([a.value for a in Algorithm]),
                     help="Placement solver"),
        click.option("--seed", type=int, help="Seed for every random choice"),
        click.option("--population", type=int, help="GA population size"),
        click.option("--generations", type=int, help="GA generation count"),
        click.option("--strict-boundary/--lenient-boundary", default=None,
                     help="Whether grazing a building edge blocks line of sight"),
        click.option("--prune/--no-prune", default=None,
                     help="Drop redundant RSUs after the agile phases"),
        click.option("--workers", type=int, help="Threads for visibility and sweeps"),
        click.option("--cache/--no-cache", default=None,
                     help="Reuse visibility tables from ~/.rsuplan/cache"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(
    config_path: Optional[str] = None,
    tau: Optional[float] = None,
    rss_th: Optional[str] = None,
    rsu_threshold: Optional[float] = None,
    tile_size: Optional[float] = None,
    border_margin: Optional[float] = None,
    angle_threshold: Optional[float] = None,
    algorithm: Optional[str] = None,
    seed: Optional[int] = None,
    population: Optional[int] = None,
    generations: Optional[int] = None,
    strict_boundary: Optional[bool] = None,
    prune: Optional[bool] = None,
    workers: Optional[int] = None,
    cache: Optional[bool] = None,
) -> PlanningConfig:
    """
    Planning configuration from an optional YAML file plus command-line overrides.

    Returns:
        PlanningConfig; unset flags keep the file (or default) values
    """
    config = load_config(Path(config_path)) if config_path else PlanningConfig()
    config = config.with_overrides(
        tau=tau,
        rss_th_dbm=rss_th,
        rsu_threshold_m=rsu_threshold,
        tile_size_m=tile_size,
        border_margin_m=border_margin,
        angle_threshold_deg=angle_threshold,
        algorithm=algorithm,
        seed=seed,
        strict_boundary=strict_boundary,
        prune_redundant=prune,
        workers=workers,
        cache_enabled=cache,
    )
    ga_changes = {
        k: v for k, v in (("population_size", population), ("generations", generations)) if v is not None
    }
    if ga_changes:
        config = replace(config, ga=replace(config.ga, **ga_changes))
    return config


def _with_config(func: Callable) -> Callable:
    """Collapse the planning options into a single ``config`` argument."""

    @functools.wraps(func)
    def wrapper(**kwargs: Any) -> Any:
        names = (
            "config_path", "tau", "rss_th", "rsu_threshold", "tile_size", "border_margin",
            "angle_threshold", "algorithm", "seed", "population", "generations",
            "strict_boundary", "prune", "workers", "cache",
        )
        config = build_config(**{name: kwargs.pop(name) for name in names})
        return func(config=config, **kwargs)

    return planning_options(wrapper)


def _split(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _present(value: Any) -> Optional[float]:
    """Sweep-table cell as a number, None for missing values."""
    return None if pd.isna(value) else float(value)


def _scene_table(name: str, scene: Scene) -> Table:
    table = Table(title=f"Scene {name}")
    table.add_column("Property", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Extent", f"{format_meters(scene.width)} × {format_meters(scene.height)}")
    table.add_row("Building blocks", str(len(scene.buildings)))
    table.add_row("Road components", str(len(scene.road_region)))
    table.add_row("Road area", f"{scene.road_area:,.0f} m²")
    table.add_row("Georeferenced", "yes" if scene.projection is not None else "no")
    return table


def _result_table(result: RunResult) -> Table:
    table = Table(title=f"{result.algorithm} on {result.scene}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    status_style = "green" if result.feasible else "red"
    table.add_row("Status", f"[{status_style}]{result.status}[/{status_style}]")
    table.add_row("Candidates |C|", str(result.n_candidates))
    table.add_row("Deployed |D|", str(result.n_deployed) if result.n_deployed is not None else "n/a")
    table.add_row("Coverage", format_percentage(result.coverage_rate))
    table.add_row("Mean top RSS", format_dbm(result.mean_top_rss))
    if result.report is not None:
        table.add_row("Mean covered RSS", format_dbm(result.report.mean_covered_rss))
        table.add_row(
            "Tiles covered",
            f"{result.report.covered_count}/{result.report.n_reference} "
            f"(need {result.report.required_count})",
        )
    table.add_row("Runtime", f"{result.runtime_seconds:.2f} s")
    if result.error:
        table.add_row("Note", result.error)
    return table


@click.group(invoke_without_command=True)
@click.option("--version", is_flag=True, help="Show version and exit")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx: click.Context, version: bool, verbose: bool) -> None:
    """
    rsuplan - minimal mmWave RSU deployments for city maps.

    Ingest a map, generate candidate sites and plan a deployment that keeps the
    required share of the roads in line of sight at the required signal strength.
    """
    _configure_logging(verbose)
    if version:
        console.print(f"rsuplan version {__version__}")
        sys.exit(EXIT_OK)

    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())


@cli.command()
@click.option("--osm", "osm_path", type=click.Path(exists=True, dir_okay=False),
              help="OSM XML extract")
@click.option("--bbox", type=str, help="Geodetic window 'south,west,north,east'")
@click.option("--synthetic", type=click.Choice(["grid", "irregular"]), help="Generate a city instead")
@click.option("--blocks", type=str, default="5x5", show_default=True, help="Synthetic block count NXxNY")
@click.option("--block-size", type=float, default=90.0, show_default=True, help="Synthetic block edge, meters")
@click.option("--road-width", type=float, default=10.0, show_default=True, help="Synthetic road width, meters")
@click.option("--jitter", type=float, default=12.0, show_default=True, help="Irregular block perturbation, meters")
@click.option("--seed", type=int, default=0, show_default=True, help="Irregular scene seed")
@click.option("--sections", type=int, default=1, show_default=True,
              help="Also split the scene into k×k section files")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML config supplying highway classes and road widths")
@click.option("--output", "-o", type=click.Path(dir_okay=False), required=True, help="Scene file to write")
def ingest(
    osm_path: Optional[str],
    bbox: Optional[str],
    synthetic: Optional[str],
    blocks: str,
    block_size: float,
    road_width: float,
    jitter: float,
    seed: int,
    sections: int,
    config_path: Optional[str],
    output: str,
) -> None:
    """Build a scene file from an OSM extract or a synthetic city."""
    if (osm_path is None) == (synthetic is None):
        raise click.UsageError("Give exactly one of --osm or --synthetic")

    if synthetic is not None:
        try:
            nx, ny = (int(v) for v in blocks.lower().split("x"))
        except ValueError as e:
            raise click.BadParameter(f"expected NXxNY, got {blocks!r}", param_hint="--blocks") from e
        if synthetic == "grid":
            scene = generate_synthetic_grid(nx, ny, block_size, road_width)
        else:
            scene = generate_irregular_scene(nx, ny, block_size, road_width, jitter, seed)
    else:
        if bbox is None:
            raise click.UsageError("--osm needs --bbox")
        config = load_config(Path(config_path)) if config_path else PlanningConfig()
        extract = ingest_osm(
            Path(osm_path), GeoWindow.parse(bbox), config.highway_classes, config.road_widths_m
        )
        scene = build_scene(extract.buildings, extract.roads, extract.bounds, extract.projection)

    out = Path(output)
    save_scene(scene, out)
    console.print(_scene_table(out.name, scene))
    console.print(f"[green]Scene written to {out}[/green]")

    if sections > 1:
        for (row, col), part in split_scene(scene, sections, sections):
            part_path = out.with_name(f"{out.stem}_r{row}c{col}{out.suffix}")
            save_scene(part, part_path)
            console.print(f"  section ({row}, {col}) → {part_path}")


@cli.command()
@click.argument("scene_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Write candidates as .csv or .geojson")
@_with_config
def candidates(scene_file: str, output: Optional[str], config: PlanningConfig) -> None:
    """Generate the corner and long-road candidate sites of a scene."""
    scene = load_scene(Path(scene_file))
    sites = assemble_candidates(scene, config)

    table = Table(title=f"Candidates for {Path(scene_file).name}")
    table.add_column("Kind", style="cyan")
    table.add_column("Count", justify="right")
    for kind in CandidateKind:
        table.add_row(kind.value, str(sum(1 for s in sites if s.kind is kind)))
    table.add_row("[bold]total[/bold]", f"[bold]{len(sites)}[/bold]")
    console.print(table)

    if output:
        out = Path(output)
        if out.suffix.lower() in (".geojson", ".json"):
            ReportGenerator.to_geojson(ReportGenerator.candidates_geojson(sites, scene.projection), out)
        else:
            ReportGenerator.candidates_to_csv(sites, out)
        console.print(f"[green]Candidates written to {out}[/green]")


@cli.command()
@click.argument("scene_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", type=click.Path(file_okay=False), default="rsuplan-out",
              show_default=True, help="Directory for deployment, tiles, CDF and summary files")
@_with_config
def plan(scene_file: str, output_dir: str, config: PlanningConfig) -> None:
    """Plan a deployment for one scene; exits 2 when the constraints cannot be met."""
    result = run_plan(Path(scene_file), config, Path(output_dir))
    console.print(_result_table(result))
    if result.output_dir is not None:
        console.print(f"[green]Outputs written to {result.output_dir}[/green]")
    sys.exit(EXIT_OK if result.feasible else EXIT_INFEASIBLE)


@cli.command()
@click.argument("scene_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--taus", type=str, default=",".join(f"{t:g}" for t in SWEEP_TAUS), show_default=True,
              help="Comma-separated tolerances")
@click.option("--rss-ths", type=str,
              default=",".join("inf" if r is None else f"{r:g}" for r in SWEEP_RSS_THRESHOLDS),
              show_default=True, help="Comma-separated thresholds ('inf' disables)")
@click.option("--algorithms", type=str, default="agile,gc,ga", show_default=True,
              help="Comma-separated solvers")
@click.option("--seeds", type=str, default="0", show_default=True, help="Comma-separated GA seeds")
@click.option("--output-dir", "-o", type=click.Path(file_okay=False), default="rsuplan-sweep",
              show_default=True, help="Root directory for cell outputs and sweep.csv")
@_with_config
def sweep(
    scene_file: str,
    taus: str,
    rss_ths: str,
    algorithms: str,
    seeds: str,
    output_dir: str,
    config: PlanningConfig,
) -> None:
    """Run the τ × RSS_th × algorithm × seed cross product on one scene."""
    try:
        tau_list = [float(t) for t in _split(taus)]
        rss_list = [parse_rss_threshold(r) for r in _split(rss_ths)]
        algorithm_list = [Algorithm(a) for a in _split(algorithms)]
        seed_list = [int(s) for s in _split(seeds)]
    except ValueError as e:
        raise click.BadParameter(str(e)) from e

    out = Path(output_dir)
    frame = run_sweep(
        Path(scene_file),
        tau_list,
        rss_list,
        algorithm_list,
        seed_list,
        config=config,
        output_dir=out,
        workers=config.workers or 1,
    )

    table = Table(title=f"Sweep on {Path(scene_file).name}")
    for column in ("Algorithm", "τ", "RSS_th", "Seed", "Status", "|D|", "Coverage", "Mean top RSS"):
        table.add_column(column, justify="right" if column not in ("Algorithm", "Status") else "left")
    for row in frame.itertuples(index=False):
        n_deployed = _present(row.n_deployed)
        table.add_row(
            row.algorithm,
            f"{row.tau:g}",
            format_threshold(parse_rss_threshold(row.rss_th)),
            str(row.seed),
            row.status,
            "n/a" if n_deployed is None else str(int(n_deployed)),
            format_percentage(_present(row.coverage_rate)),
            format_dbm(_present(row.mean_top_rss_dbm)),
        )
    console.print(table)

    summary = reduction_summary(frame)
    if not summary.empty:
        summary.to_csv(out / "reduction.csv", index=False, float_format="%.6f")
        reduction = Table(title="RSU count relative to agile")
        for column in ("Algorithm", "τ", "RSS_th", "|D|", "agile |D|", "Reduction"):
            reduction.add_column(column)
        for row in summary.itertuples(index=False):
            reduction.add_row(
                row.algorithm,
                f"{row.tau:g}",
                row.rss_th,
                f"{row.n_deployed:.2f}",
                f"{row.reference_n_deployed:.2f}",
                "n/a" if pd.isna(row.reduction_pct) else f"{row.reduction_pct:.1f}%",
            )
        console.print(reduction)

    console.print(f"[green]Sweep table written to {out / 'sweep.csv'}[/green]")


@cli.command(name="eval")
@click.argument("scene_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("deployment_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", "-o", type=click.Path(file_okay=False),
              help="Directory for tiles, CDF and summary files")
@_with_config
def eval_command(
    scene_file: str,
    deployment_file: str,
    output_dir: Optional[str],
    config: PlanningConfig,
) -> None:
    """Score an externally supplied deployment (GeoJSON or CSV of candidate ids)."""
    result = evaluate_external(
        Path(scene_file), Path(deployment_file), config, Path(output_dir) if output_dir else None
    )
    console.print(_result_table(result))
    sys.exit(EXIT_OK if result.feasible else EXIT_INFEASIBLE)


@cli.command(name="init-config")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default="rsuplan.yaml",
              show_default=True, help="YAML file to write")
@_with_config
def init_config(output: str, config: PlanningConfig) -> None:
    """Write the effective planning configuration as YAML."""
    dump_config(config, Path(output))
    console.print(f"[green]Configuration written to {output}[/green]")


@cli.command(name="cache-clear")
@click.option("--cache-dir", type=click.Path(file_okay=False),
              help="Cache directory (defaults to ~/.rsuplan/cache)")
@click.option("--expired-only", is_flag=True,
              help="Only remove entries past their lifetime and unreadable ones")
def cache_clear(cache_dir: Optional[str], expired_only: bool) -> None:
    """Remove cached visibility tables."""
    builder = CachedVisibilityBuilder(cache_dir=Path(cache_dir) if cache_dir else None)
    removed = builder.clear_cache(expired_only=expired_only)
    console.print(f"[green]Removed {removed} cached tables[/green]")


def main() -> None:
    """Main entry point."""
    try:
        cli()
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted by user[/yellow]")
        sys.exit(EXIT_OK)
    except Exception as e:
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(EXIT_CRASH)


if __name__ == "__main__":
    main()
