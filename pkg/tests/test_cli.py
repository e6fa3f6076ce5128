"""
Tests for the command-line interface.
"""

import json

import pandas as pd
import pytest
from click.testing import CliRunner

from rsuplan import __version__
from rsuplan.cli import EXIT_INFEASIBLE, EXIT_OK, build_config, cli
from rsuplan.core.cached_visibility import CachedVisibilityBuilder
from rsuplan.core.config import Algorithm, load_config
from rsuplan.core.scene_file import load_scene


@pytest.fixture
def runner():
    """Click test runner."""
    return CliRunner()


@pytest.fixture
def block_file(tmp_path, runner):
    """A 1x1 synthetic grid written through the ingest command."""
    path = tmp_path / "block.json"
    result = runner.invoke(cli, ["ingest", "--synthetic", "grid", "--blocks", "1x1", "-o", str(path)])
    assert result.exit_code == 0, result.output
    return path


def test_version(runner):
    """Test the version flag."""
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_help_without_command(runner):
    """Test that the bare group prints usage."""
    result = runner.invoke(cli, [])
    assert result.exit_code == 0
    assert "plan" in result.output


def test_ingest_synthetic(block_file):
    """Test the synthetic scene file."""
    scene = load_scene(block_file)
    assert scene.bounds == (110.0, 110.0)
    assert len(scene.buildings) == 1


def test_ingest_sections(tmp_path, runner):
    """Test the section split files."""
    path = tmp_path / "city.json"
    result = runner.invoke(
        cli, ["ingest", "--synthetic", "grid", "--blocks", "2x2", "--sections", "2", "-o", str(path)]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "city_r0c0.json").exists()
    assert (tmp_path / "city_r1c1.json").exists()


def test_ingest_needs_one_source(tmp_path, runner):
    """Test the source option check."""
    result = runner.invoke(cli, ["ingest", "-o", str(tmp_path / "x.json")])
    assert result.exit_code != 0
    assert "exactly one" in result.output


def test_ingest_bad_blocks(tmp_path, runner):
    """Test the block count format."""
    result = runner.invoke(
        cli, ["ingest", "--synthetic", "grid", "--blocks", "five", "-o", str(tmp_path / "x.json")]
    )
    assert result.exit_code != 0


def test_candidates_command(tmp_path, runner, block_file):
    """Test the candidate listing and export."""
    out = tmp_path / "cands.csv"
    result = runner.invoke(cli, ["candidates", str(block_file), "-o", str(out)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 16
    assert list(frame["id"]) == list(range(16))


def test_candidates_geojson(tmp_path, runner, block_file):
    """Test GeoJSON candidate export."""
    out = tmp_path / "cands.geojson"
    result = runner.invoke(cli, ["candidates", str(block_file), "-o", str(out)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert data["type"] == "FeatureCollection"
    assert len(data["features"]) == 16


def test_plan_feasible(tmp_path, runner, block_file):
    """Test a feasible plan and its exit code."""
    out = tmp_path / "run"
    result = runner.invoke(
        cli,
        ["plan", str(block_file), "--border-margin", "0", "--tile-size", "5", "--tau", "0.9", "-o", str(out)],
    )
    assert result.exit_code == EXIT_OK, result.output
    assert "feasible" in result.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "feasible"
    assert summary["n_deployed"] >= 1


def test_plan_infeasible_exit_code(tmp_path, runner, block_file):
    """Test that an unreachable RSS target exits 2."""
    result = runner.invoke(
        cli,
        [
            "plan", str(block_file), "--border-margin", "0", "--tile-size", "5",
            "--tau", "1", "--rss-th", "-30", "-o", str(tmp_path / "run"),
        ],
    )
    assert result.exit_code == EXIT_INFEASIBLE
    assert "infeasible" in result.output
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["status"] == "infeasible"


def test_plan_stage_failure(tmp_path, runner, scene_file):
    """Test that a crashing stage does not exit cleanly."""
    result = runner.invoke(cli, ["plan", str(scene_file), "-o", str(tmp_path / "run")])
    assert result.exit_code != 0
    assert result.exit_code != EXIT_INFEASIBLE


def test_eval_command(tmp_path, runner, block_file):
    """Test scoring a CSV of every candidate."""
    cands = tmp_path / "cands.csv"
    runner.invoke(cli, ["candidates", str(block_file), "-o", str(cands)])
    result = runner.invoke(
        cli,
        ["eval", str(block_file), str(cands), "--border-margin", "0", "--tile-size", "5",
         "-o", str(tmp_path / "eval")],
    )
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / "eval" / "tiles.csv").exists()


def test_sweep_command(tmp_path, runner, block_file):
    """Test a small sweep."""
    out = tmp_path / "sweep"
    result = runner.invoke(
        cli,
        [
            "sweep", str(block_file), "--border-margin", "0", "--tile-size", "5",
            "--taus", "0.9", "--rss-ths", "inf,-84", "--algorithms", "agile,gc",
            "-o", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "sweep.csv")
    assert len(frame) == 4
    assert set(frame["algorithm"]) == {"agile", "gc"}


def test_sweep_rejects_empty_algorithms(tmp_path, runner, block_file):
    """Test that an empty solver list fails."""
    result = runner.invoke(
        cli,
        ["sweep", str(block_file), "--border-margin", "0", "--algorithms", "", "-o", str(tmp_path / "s")],
    )
    assert result.exit_code != 0


def test_sweep_rejects_unknown_algorithm(tmp_path, runner, block_file):
    """Test solver name validation."""
    result = runner.invoke(
        cli,
        ["sweep", str(block_file), "--algorithms", "annealing", "-o", str(tmp_path / "s")],
    )
    assert result.exit_code != 0


def test_init_config(tmp_path, runner):
    """Test that the written YAML carries the overrides."""
    out = tmp_path / "rsuplan.yaml"
    result = runner.invoke(
        cli, ["init-config", "--tau", "0.95", "--rss-th", "-84", "--algorithm", "ga", "-o", str(out)]
    )
    assert result.exit_code == 0, result.output
    config = load_config(out)
    assert config.tau == 0.95
    assert config.rss_th_dbm == -84.0
    assert config.algorithm is Algorithm.GA


def test_build_config_layers_file_and_flags(tmp_path):
    """Test that flags override the YAML file."""
    path = tmp_path / "c.yaml"
    path.write_text("tau: 0.8\nrss_th_dbm: -79\nga:\n  population_size: 40\n")
    config = build_config(config_path=str(path), tau=0.99, generations=12)
    assert config.tau == 0.99
    assert config.rss_th_dbm == -79.0
    assert config.ga.population_size == 40
    assert config.ga.generations == 12


def test_cache_clear_command(tmp_path, runner):
    """Test expired-only and full cache clearing."""
    cache_dir = tmp_path / "cache"
    builder = CachedVisibilityBuilder(cache_dir=cache_dir, cache_ttl=0)
    builder.cache.set("expired", "value")
    builder.cache.set("kept", "value", ttl=3600)

    result = runner.invoke(cli, ["cache-clear", "--cache-dir", str(cache_dir), "--expired-only"])
    assert result.exit_code == EXIT_OK, result.output
    assert "Removed 1" in result.output
    assert len(list(cache_dir.glob("*.cache"))) == 1

    result = runner.invoke(cli, ["cache-clear", "--cache-dir", str(cache_dir)])
    assert result.exit_code == EXIT_OK, result.output
    assert not list(cache_dir.glob("*.cache"))
