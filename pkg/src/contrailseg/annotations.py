"""Scene-record annotation files.

The on-disk format is a UTF-8 JSON array; each element describes one labeled
scene::

    {"scene_id": "LC08_L1TP_...", "width": 512, "height": 512, "is_night": false,
     "polygons": [[[row, col], [row, col], [row, col], ...], ...],
     "waypoints": [{"row": 1.5, "col": 2.0, "flight": "a1"}, ...]}

Coordinates are image pixels, ``(row, col)``. Vertices may fall outside the
image; they are clipped when the mask is rasterized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

_RECORD_FIELDS = ("scene_id", "width", "height", "is_night", "polygons", "waypoints")


class AnnotationParseError(ValueError):
    """The document is not valid JSON. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class AnnotationValidationError(ValueError):
    """The JSON is well formed but a record violates the schema."""

    def __init__(self, index: int, field: str, message: str):
        super().__init__(f"record {index}, field {field!r}: {message}")
        self.index = index
        self.field = field


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(self.vertices)}")
        for r, c in self.vertices:
            if not (math.isfinite(r) and math.isfinite(c)):
                raise ValueError("polygon vertex is not finite")


@dataclass(frozen=True)
class Waypoint:
    row: float
    col: float
    flight_tag: str

    def __post_init__(self):
        if not (math.isfinite(self.row) and math.isfinite(self.col)):
            raise ValueError("waypoint coordinate is not finite")


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    polygons: tuple[Polygon, ...]
    waypoints: tuple[Waypoint, ...]
    is_night: bool
    width: int
    height: int

    def __post_init__(self):
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")

    @property
    def has_contrail(self) -> bool:
        return len(self.polygons) > 0


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coord(v, index, field):
    if not _is_number(v):
        raise AnnotationValidationError(index, field, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise AnnotationValidationError(index, field, "coordinate is not finite")
    return v


def _positive_int(obj, index, field):
    v = obj[field]
    if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
        raise AnnotationValidationError(index, field, f"expected a positive integer, got {v!r}")
    return v


def _record(obj, index: int) -> SceneRecord:
    if not isinstance(obj, dict):
        raise AnnotationValidationError(index, "<record>", "expected a JSON object")
    for name in _RECORD_FIELDS:
        if name not in obj:
            raise AnnotationValidationError(index, name, "missing field")

    scene_id = obj["scene_id"]
    if not isinstance(scene_id, str) or not scene_id:
        raise AnnotationValidationError(index, "scene_id", "expected a non-empty string")
    width = _positive_int(obj, index, "width")
    height = _positive_int(obj, index, "height")
    if not isinstance(obj["is_night"], bool):
        raise AnnotationValidationError(index, "is_night", "expected a boolean")

    raw_polys = obj["polygons"]
    if not isinstance(raw_polys, list):
        raise AnnotationValidationError(index, "polygons", "expected an array")
    polygons = []
    for j, poly in enumerate(raw_polys):
        field = f"polygons[{j}]"
        if not isinstance(poly, list):
            raise AnnotationValidationError(index, field, "expected an array of [row, col] pairs")
        if len(poly) < 3:
            raise AnnotationValidationError(index, field, f"polygon has {len(poly)} vertices, needs >= 3")
        verts = []
        for k, pt in enumerate(poly):
            if not isinstance(pt, list) or len(pt) != 2:
                raise AnnotationValidationError(index, f"{field}[{k}]", "expected a [row, col] pair")
            verts.append((_coord(pt[0], index, f"{field}[{k}]"), _coord(pt[1], index, f"{field}[{k}]")))
        polygons.append(Polygon(tuple(verts)))

    raw_wps = obj["waypoints"]
    if not isinstance(raw_wps, list):
        raise AnnotationValidationError(index, "waypoints", "expected an array")
    waypoints = []
    for j, wp in enumerate(raw_wps):
        field = f"waypoints[{j}]"
        if not isinstance(wp, dict) or not {"row", "col", "flight"} <= wp.keys():
            raise AnnotationValidationError(index, field, "expected {row, col, flight}")
        if not isinstance(wp["flight"], str):
            raise AnnotationValidationError(index, f"{field}.flight", "expected a string")
        waypoints.append(
            Waypoint(_coord(wp["row"], index, f"{field}.row"), _coord(wp["col"], index, f"{field}.col"), wp["flight"])
        )

    return SceneRecord(scene_id, tuple(polygons), tuple(waypoints), obj["is_night"], width, height)


def parse_scene_records(document: bytes | str) -> list[SceneRecord]:
    """Parse an annotation document. Records without polygons are kept."""
    if isinstance(document, (bytes, bytearray)):
        try:
            text = bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise AnnotationParseError("invalid UTF-8", exc.start) from None
    else:
        text = document
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise AnnotationParseError(exc.msg, offset) from None
    if not isinstance(data, list):
        raise AnnotationValidationError(-1, "<document>", "top level must be an array")
    return [_record(obj, i) for i, obj in enumerate(data)]


def serialize_scene_records(records) -> bytes:
    out = []
    for rec in records:
        out.append(
            {
                "scene_id": rec.scene_id,
                "width": rec.width,
                "height": rec.height,
                "is_night": rec.is_night,
                "polygons": [[[r, c] for r, c in p.vertices] for p in rec.polygons],
                "waypoints": [{"row": w.row, "col": w.col, "flight": w.flight_tag} for w in rec.waypoints],
            }
        )
    return json.dumps(out, allow_nan=False).encode("utf-8")


def load_scene_records(path) -> list[SceneRecord]:
    with open(path, "rb") as fh:
        return parse_scene_records(fh.read())
