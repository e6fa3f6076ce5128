"""
Scene file format: the JSON interchange document every command reads.

Schema::

    {
      "format": "rsuplan-scene",
      "version": 1,
      "bounds": [Mx, My],
      "buildings": [[[x, y], ...], ...],
      "road_region": [{"outer": [[x, y], ...], "holes": [[[x, y], ...], ...]}, ...],
      "projection": {"lat0": .., "lon0": .., "x_offset": .., "y_offset": ..}   # optional
    }

Rings are stored open (no repeated closing vertex), in map-local meters.
"""

import json
import logging
from pathlib import Path
from typing import Any, List

from rsuplan.core.exceptions import InvalidPolygonError, SceneFileError
from rsuplan.core.geometry import LocalProjection, PolygonWithHoles, Scene, SimplePolygon

logger = logging.getLogger(__name__)

SCENE_FORMAT = "rsuplan-scene"
SCENE_VERSION = 1


def scene_to_document(scene: Scene) -> dict:
    """Scene as a JSON-ready mapping."""
    return {"format": SCENE_FORMAT, "version": SCENE_VERSION, **scene.to_dict()}


def save_scene(scene: Scene, path: Path) -> Path:
    """
    Write a scene file.

    Args:
        scene: Scene to store
        path: Destination (parent directories are created)

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(scene_to_document(scene), f, indent=1, sort_keys=True)
        f.write("\n")
    logger.debug(f"Wrote scene file {path}")
    return path


def _ring(raw: Any, path: str, what: str) -> SimplePolygon:
    if not isinstance(raw, list) or not all(
        isinstance(v, list) and len(v) == 2 for v in raw
    ):
        raise SceneFileError(path, f"{what} must be a list of [x, y] pairs")
    return SimplePolygon(tuple((float(v[0]), float(v[1])) for v in raw))


def scene_from_document(data: Any, path: str = "<memory>") -> Scene:
    """
    Rebuild a Scene from its document form.

    Args:
        data: Parsed JSON
        path: Source name for error messages

    Returns:
        Scene

    Raises:
        SceneFileError: If the document does not follow the schema
    """
    if not isinstance(data, dict):
        raise SceneFileError(path, "root must be an object")
    if data.get("format") != SCENE_FORMAT:
        raise SceneFileError(path, f"format must be '{SCENE_FORMAT}'")
    if data.get("version") != SCENE_VERSION:
        raise SceneFileError(path, f"unsupported version {data.get('version')!r}")

    bounds = data.get("bounds")
    if not isinstance(bounds, list) or len(bounds) != 2:
        raise SceneFileError(path, "bounds must be [Mx, My]")

    try:
        buildings = [
            _ring(raw, path, f"building {k}") for k, raw in enumerate(data.get("buildings", []))
        ]
        for k, building in enumerate(buildings):
            building.validate(k)

        components: List[PolygonWithHoles] = []
        for k, raw in enumerate(data.get("road_region", [])):
            if not isinstance(raw, dict) or "outer" not in raw:
                raise SceneFileError(path, f"road component {k} needs an 'outer' ring")
            components.append(
                PolygonWithHoles(
                    outer=_ring(raw["outer"], path, f"road component {k} outer ring"),
                    holes=tuple(
                        _ring(h, path, f"road component {k} hole {j}")
                        for j, h in enumerate(raw.get("holes", []))
                    ),
                )
            )

        projection = None
        if data.get("projection") is not None:
            p = data["projection"]
            projection = LocalProjection(
                lat0=float(p["lat0"]),
                lon0=float(p["lon0"]),
                x_offset=float(p["x_offset"]),
                y_offset=float(p["y_offset"]),
            )
    except InvalidPolygonError as e:
        raise SceneFileError(path, str(e)) from e
    except (KeyError, TypeError, ValueError) as e:
        raise SceneFileError(path, f"malformed value: {e}") from e

    if not components:
        raise SceneFileError(path, "road_region is empty")

    return Scene(
        bounds=(float(bounds[0]), float(bounds[1])),
        buildings=tuple(buildings),
        road_region=tuple(components),
        projection=projection,
    )


def load_scene(path: Path) -> Scene:
    """
    Read a scene file.

    Args:
        path: Scene file path

    Returns:
        Scene

    Raises:
        SceneFileError: If the file is missing, not JSON or off-schema
    """
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise SceneFileError(str(path), f"cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise SceneFileError(str(path), f"not valid JSON at char {e.pos}: {e.msg}") from e

    scene = scene_from_document(data, str(path))
    logger.debug(
        f"Loaded scene {path}: {len(scene.buildings)} buildings, "
        f"{len(scene.road_region)} road components"
    )
    return scene
