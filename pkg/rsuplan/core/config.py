"""
Planning configuration: defaults, YAML loading and validation.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from rsuplan.core.exceptions import ConfigError, InvalidParameterError
from rsuplan.core.radio import RadioParams

logger = logging.getLogger(__name__)

# Width (m) per highway class when OSM carries neither width nor lanes
DEFAULT_ROAD_WIDTHS_M: Dict[str, float] = {
    "motorway": 21.0,
    "trunk": 16.0,
    "primary": 12.0,
    "secondary": 10.0,
    "tertiary": 8.0,
    "unclassified": 6.0,
    "residential": 6.0,
    "living_street": 5.0,
    "service": 4.0,
}

DEFAULT_HIGHWAY_CLASSES: Tuple[str, ...] = tuple(DEFAULT_ROAD_WIDTHS_M)

# Sweep sets used by the evaluation protocol
SWEEP_TAUS: Tuple[float, ...] = (0.85, 0.90, 0.95, 0.99)
SWEEP_RSS_THRESHOLDS: Tuple[Optional[float], ...] = (None, -90.0, -84.0, -79.0)


class Algorithm(Enum):
    """Available placement solvers."""

    AGILE = "agile"
    GC = "gc"
    GA = "ga"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class GaConfig:
    """Genetic-algorithm hyperparameters; None means derive from |C|."""

    population_size: int = 100
    generations: int = 500
    tournament_size: int = 3
    crossover_prob: float = 0.9
    # Defaults to 1/|C|
    mutation_prob_per_bit: Optional[float] = None
    # Defaults to 10·|C|
    penalty_weight: Optional[float] = None
    elitism: int = 1
    seed: int = 0
    # Adds |C| to every infeasible fitness so feasible chromosomes always rank first
    feasibility_offset: bool = True

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise InvalidParameterError("population_size", self.population_size, "must be >= 2")
        if self.generations < 1:
            raise InvalidParameterError("generations", self.generations, "must be >= 1")
        if not 1 <= self.tournament_size <= self.population_size:
            raise InvalidParameterError(
                "tournament_size", self.tournament_size, "must be in [1, population_size]"
            )
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise InvalidParameterError("crossover_prob", self.crossover_prob, "must be in [0, 1]")
        if self.mutation_prob_per_bit is not None and not 0.0 <= self.mutation_prob_per_bit <= 1.0:
            raise InvalidParameterError(
                "mutation_prob_per_bit", self.mutation_prob_per_bit, "must be in [0, 1]"
            )
        if self.penalty_weight is not None and self.penalty_weight <= 0:
            raise InvalidParameterError("penalty_weight", self.penalty_weight, "must be positive")
        if not 0 <= self.elitism < self.population_size:
            raise InvalidParameterError("elitism", self.elitism, "must be in [0, population_size)")

    def mutation_rate(self, n_candidates: int) -> float:
        """Per-bit flip probability for a chromosome of length n_candidates."""
        if self.mutation_prob_per_bit is not None:
            return self.mutation_prob_per_bit
        return 1.0 / max(n_candidates, 1)

    def penalty(self, n_candidates: int) -> float:
        """Constraint-violation weight for a chromosome of length n_candidates."""
        if self.penalty_weight is not None:
            return self.penalty_weight
        return 10.0 * max(n_candidates, 1)


@dataclass(frozen=True)
class PlanningConfig:
    """Every knob of a planning run; defaults are the 60 GHz urban setup."""

    radio: RadioParams = field(default_factory=RadioParams)
    tau: float = 0.90
    # None disables the mean-RSS constraint
    rss_th_dbm: Optional[float] = None
    rsu_threshold_m: float = 100.0
    tile_size_m: float = 4.0
    border_margin_m: float = 50.0
    angle_threshold_deg: float = 30.0
    corner_nudge_m: float = 0.5
    merge_radius_m: float = 5.0
    strict_boundary: bool = False
    algorithm: Algorithm = Algorithm.AGILE
    ga: GaConfig = field(default_factory=GaConfig)
    seed: int = 0
    phase3_max_passes: int = 50
    prune_redundant: bool = False
    max_exhaustive_candidates: int = 20
    workers: Optional[int] = None
    cache_enabled: bool = False
    highway_classes: Tuple[str, ...] = DEFAULT_HIGHWAY_CLASSES
    road_widths_m: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ROAD_WIDTHS_M))

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidParameterError("tau", self.tau, "must be in [0, 1]")
        if self.rss_th_dbm is not None and not math.isfinite(self.rss_th_dbm):
            raise InvalidParameterError("rss_th_dbm", self.rss_th_dbm, "use None to disable")
        for name in ("rsu_threshold_m", "tile_size_m", "merge_radius_m"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(name, getattr(self, name), "must be positive")
        for name in ("border_margin_m", "corner_nudge_m", "angle_threshold_deg"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(name, getattr(self, name), "must be >= 0")
        if self.phase3_max_passes < 0:
            raise InvalidParameterError(
                "phase3_max_passes", self.phase3_max_passes, "must be >= 0"
            )
        if self.workers is not None and self.workers < 1:
            raise InvalidParameterError("workers", self.workers, "must be >= 1")

    @property
    def rss_enabled(self) -> bool:
        """Whether the mean-RSS constraint is active."""
        return self.rss_th_dbm is not None

    def ga_config(self) -> GaConfig:
        """GA settings with the run seed applied; all randomness flows from it."""
        return replace(self.ga, seed=self.seed)

    def with_overrides(self, **overrides: Any) -> "PlanningConfig":
        """
        Copy with selected fields replaced, skipping None values.

        Args:
            **overrides: Field values; ``rss_th_dbm`` is parsed with parse_rss_threshold

        Returns:
            New PlanningConfig
        """
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "rss_th_dbm" in changes:
            changes["rss_th_dbm"] = parse_rss_threshold(changes["rss_th_dbm"])
        if "algorithm" in changes and not isinstance(changes["algorithm"], Algorithm):
            changes["algorithm"] = Algorithm(changes["algorithm"])
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data echo used in run summaries."""
        data = asdict(self)
        data["algorithm"] = self.algorithm.value
        data["highway_classes"] = list(self.highway_classes)
        data["rss_th_dbm"] = self.rss_th_dbm if self.rss_enabled else "disabled"
        return data


def parse_rss_threshold(value: Any) -> Optional[float]:
    """
    Read an RSS threshold where inf, null and 'disabled' turn the constraint off.

    Args:
        value: Number, string or None

    Returns:
        Threshold in dBm, or None when disabled

    Raises:
        ConfigError: If the value is not a number or a disabling keyword
    """
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity", "disabled", "none", "off", ""):
            return None
        try:
            value = float(text)
        except ValueError as e:
            raise ConfigError(f"Cannot read RSS threshold {value!r}") from e
    number = float(value)
    if math.isinf(number):
        return None
    return number


def _build_section(cls: Any, raw: Any, section: str) -> Any:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"Section '{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in '{section}': {', '.join(unknown)}")
    return cls(**raw)


def config_from_dict(raw: Dict[str, Any]) -> PlanningConfig:
    """
    Build a PlanningConfig from plain data (the YAML schema).

    Args:
        raw: Mapping with PlanningConfig field names; ``radio`` and ``ga`` nest

    Returns:
        Validated PlanningConfig

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    if not isinstance(raw, dict):
        raise ConfigError("Configuration root must be a mapping")

    known = {f.name for f in fields(PlanningConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")

    values = dict(raw)
    try:
        values["radio"] = _build_section(RadioParams, raw.get("radio"), "radio")
        values["ga"] = _build_section(GaConfig, raw.get("ga"), "ga")
        if "rss_th_dbm" in values:
            values["rss_th_dbm"] = parse_rss_threshold(values["rss_th_dbm"])
        if "algorithm" in values:
            values["algorithm"] = Algorithm(values["algorithm"])
        if "highway_classes" in values:
            values["highway_classes"] = tuple(values["highway_classes"])
        if "road_widths_m" in values:
            widths = dict(DEFAULT_ROAD_WIDTHS_M)
            widths.update({str(k): float(v) for k, v in values["road_widths_m"].items()})
            values["road_widths_m"] = widths
        return PlanningConfig(**values)
    except (InvalidParameterError, ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def load_config(path: Path) -> PlanningConfig:
    """
    Load a planning configuration from a YAML file.

    Args:
        path: YAML file path

    Returns:
        Validated PlanningConfig

    Raises:
        ConfigError: If the file is missing, unparseable or invalid
    """
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file '{path}': {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse config file '{path}': {e}") from e

    logger.debug(f"Loaded configuration from {path}")
    return config_from_dict(raw or {})


def dump_config(config: PlanningConfig, path: Path) -> None:
    """Write a configuration as YAML, readable again by load_config."""
    data = config.to_dict()
    data["rss_th_dbm"] = config.rss_th_dbm
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def required_tiles(tau: float, n_reference: int) -> int:
    """
    Tile-count target ⌈τ·|N|⌉, robust to float noise such as 0.9·3600.

    Args:
        tau: Tolerance in [0, 1]
        n_reference: |N|

    Returns:
        Number of reference tiles that must be covered
    """
    return int(math.ceil(tau * n_reference - 1e-9))


def sweep_cells(
    taus: List[float],
    rss_thresholds: List[Optional[float]],
) -> List[Tuple[float, Optional[float]]]:
    """Cross product of the tolerance and threshold lists in input order."""
    return [(tau, rss) for tau in taus for rss in rss_thresholds]
