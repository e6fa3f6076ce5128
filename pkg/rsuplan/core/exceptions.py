"""
Custom exceptions for rsuplan.
"""

from typing import Any, Optional


class RsuPlanException(Exception):
    """Base exception for rsuplan."""

    pass


class InvalidPolygonError(RsuPlanException):
    """Raised when an input polygon is degenerate or self-intersecting."""

    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"Invalid polygon at index {index}: {reason}")


class InvalidParameterError(RsuPlanException):
    """Raised when a numeric parameter is out of its allowed range."""

    def __init__(self, name: str, value: Any, reason: str):
        self.name = name
        self.value = value
        super().__init__(f"Invalid value for {name} ({value!r}): {reason}")


class OsmParseError(RsuPlanException):
    """Raised when an OSM extract cannot be parsed."""

    def __init__(self, offset: int, details: str = ""):
        self.offset = offset
        self.details = details
        message = f"Could not parse OSM extract at byte offset {offset}"
        if details:
            message += f" - {details}"
        super().__init__(message)


class InvalidWindowError(RsuPlanException):
    """Raised when a geodetic window has no extent."""

    def __init__(self, message: str = "Geodetic window must have south < north and west < east"):
        super().__init__(message)


class EmptyWindowError(RsuPlanException):
    """Raised when an OSM extract has no nodes inside the requested window."""

    def __init__(self) -> None:
        super().__init__("no features in window")


class NoRoadSurfaceError(RsuPlanException):
    """Raised when the road union is empty after clipping to the map bounds."""

    def __init__(self) -> None:
        super().__init__("no road surface in bounds")


class NoCandidatesError(RsuPlanException):
    """Raised when candidate generation yields an empty set."""

    def __init__(self) -> None:
        super().__init__("no candidate sites; check scene/threshold")


class InvalidDistanceError(RsuPlanException):
    """Raised when a link distance is negative."""

    def __init__(self, distance: float):
        self.distance = distance
        super().__init__(f"Link distance must be non-negative, got {distance}")


class EmptyGridError(RsuPlanException):
    """Raised when the tile grid over the area of interest has no tiles."""

    def __init__(self, message: str = "Tile grid is empty; border margin too large for the map"):
        super().__init__(message)


class UnknownCandidateError(RsuPlanException):
    """Raised when a deployment references a candidate id outside C."""

    def __init__(self, candidate_id: int, n_candidates: int):
        self.candidate_id = candidate_id
        self.n_candidates = n_candidates
        super().__init__(
            f"Unknown candidate id {candidate_id} (valid ids are 0..{n_candidates - 1})"
        )


class InfeasibleDeploymentError(RsuPlanException):
    """Raised when no deployment can satisfy the coverage and RSS constraints."""

    def __init__(
        self,
        reason: str,
        coverage_rate: float = 0.0,
        mean_top_rss: Optional[float] = None,
        best_fitness: Optional[float] = None,
    ):
        self.reason = reason
        self.coverage_rate = coverage_rate
        self.mean_top_rss = mean_top_rss
        self.best_fitness = best_fitness
        message = f"Infeasible deployment: {reason} (best coverage {coverage_rate:.4f}"
        if mean_top_rss is not None:
            message += f", mean top RSS {mean_top_rss:.2f} dBm"
        if best_fitness is not None:
            message += f", best fitness {best_fitness:.4f}"
        super().__init__(message + ")")


class SearchSpaceTooLargeError(RsuPlanException):
    """Raised when exhaustive search is requested on too many candidates."""

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(
            f"Exhaustive search refused: {size} candidates exceeds the limit of {limit}"
        )


class ConfigError(RsuPlanException):
    """Raised when a planning configuration is malformed."""

    def __init__(self, message: str = "Invalid planning configuration"):
        super().__init__(message)


class SceneFileError(RsuPlanException):
    """Raised when a scene file cannot be read or does not follow the schema."""

    def __init__(self, path: str, details: str):
        self.path = path
        self.details = details
        super().__init__(f"Invalid scene file '{path}': {details}")


class StageError(RsuPlanException):
    """Raised when a pipeline stage fails; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
