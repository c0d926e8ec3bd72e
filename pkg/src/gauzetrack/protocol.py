"""Canonical detection-frame data model and its newline-delimited wire format.

One frame per line, UTF-8 JSON with a fixed field order and 6-decimal reals,
so equal frames always serialize to byte-identical lines. This is the single
interchange format shared by the simulator, the replay tool, the session
service, and any live detector adapter: recorded-session files (``.ndjson``),
the ingestion socket, and simulator output all speak it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

CLASS_GAUZE = 0
CLASS_HAND = 1


class Camera(str, Enum):
    IN = "IN"
    OUT = "OUT"


class MalformedRecord(ValueError):
    """The line is not a syntactically valid frame record."""


class InvalidField(ValueError):
    """A field is present but violates its invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class Detection:
    """A single detected object: gauze (class 0) or hand (class 1)."""

    class_id: int
    confidence: float
    bbox: Tuple[float, float, float, float]  # normalized (x_min, y_min, x_max, y_max)

    def validate(self) -> None:
        if self.class_id not in (CLASS_GAUZE, CLASS_HAND):
            raise InvalidField("class_id", f"must be 0 or 1, got {self.class_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidField("confidence", f"must be in [0,1], got {self.confidence}")
        if len(self.bbox) != 4:
            raise InvalidField("bbox", "must have 4 coordinates")
        x0, y0, x1, y1 = self.bbox
        for name, v in zip(("x_min", "y_min", "x_max", "y_max"), self.bbox):
            if not (0.0 <= v <= 1.0):
                raise InvalidField("bbox", f"{name} must be in [0,1], got {v}")
        if not (x0 < x1):
            raise InvalidField("bbox", f"x_min must be < x_max, got ({x0}, {x1})")
        if not (y0 < y1):
            raise InvalidField("bbox", f"y_min must be < y_max, got ({y0}, {y1})")


@dataclass(frozen=True)
class FrameObservation:
    """One camera frame's detections; the counting engine's sole input."""

    camera: Camera
    frame_index: int
    timestamp_ms: int
    detections: Tuple[Detection, ...] = ()

    def validate(self) -> None:
        if not isinstance(self.camera, Camera):
            raise InvalidField("camera", f"must be IN or OUT, got {self.camera!r}")
        if self.frame_index < 0:
            raise InvalidField("frame_index", f"must be >= 0, got {self.frame_index}")
        if self.timestamp_ms < 0:
            raise InvalidField("timestamp_ms", f"must be >= 0, got {self.timestamp_ms}")
        for d in self.detections:
            d.validate()


def _fmt(x: float) -> str:
    # canonical 6-decimal rendering, no negative zero
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def serialize_frame(frame: FrameObservation) -> str:
    """Render a valid frame as one canonical line (no trailing newline).

    Canonical: fixed field order, reals at 6 decimal places, so equal frames
    produce byte-identical lines.
    """
    dets = ",".join(
        '{"class_id":%d,"confidence":%s,"bbox":[%s,%s,%s,%s]}'
        % (d.class_id, _fmt(d.confidence), *(_fmt(v) for v in d.bbox))
        for d in frame.detections
    )
    return '{"camera":"%s","frame_index":%d,"timestamp_ms":%d,"detections":[%s]}' % (
        frame.camera.value,
        frame.frame_index,
        frame.timestamp_ms,
        dets,
    )


def _require(obj: dict, key: str, types) -> object:
    if key not in obj:
        raise InvalidField(key, "missing")
    v = obj[key]
    if not isinstance(v, types) or isinstance(v, bool):
        raise InvalidField(key, f"wrong type {type(v).__name__}")
    return v


def parse_frame(line: str) -> FrameObservation:
    """Decode one frame line; unknown extra fields are ignored.

    Raises MalformedRecord on syntax errors and InvalidField (naming the
    offending field) when a value violates a frame or detection invariant.
    """
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, TypeError) as e:
        raise MalformedRecord(f"not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise MalformedRecord("record must be a JSON object")

    cam_raw = _require(obj, "camera", str)
    try:
        camera = Camera(cam_raw)
    except ValueError:
        raise InvalidField("camera", f"must be IN or OUT, got {cam_raw!r}") from None
    frame_index = _require(obj, "frame_index", int)
    timestamp_ms = _require(obj, "timestamp_ms", int)
    dets_raw = _require(obj, "detections", list)

    detections = []
    for i, d in enumerate(dets_raw):
        if not isinstance(d, dict):
            raise MalformedRecord(f"detections[{i}] must be an object")
        class_id = _require(d, "class_id", int)
        confidence = float(_require(d, "confidence", (int, float)))
        bbox_raw = _require(d, "bbox", list)
        if len(bbox_raw) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox_raw
        ):
            raise InvalidField("bbox", "must be a list of 4 numbers")
        detections.append(Detection(class_id, confidence, tuple(float(v) for v in bbox_raw)))

    frame = FrameObservation(camera, frame_index, timestamp_ms, tuple(detections))
    frame.validate()
    return frame


@dataclass(frozen=True)
class StreamViolation:
    position: int  # index into the sequence
    field: str
    message: str


@dataclass
class ValidationReport:
    violations: List[StreamViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_stream(frames: Iterable[FrameObservation], camera: Camera) -> ValidationReport:
    """Check per-camera monotonicity and camera-id consistency of a stream.

    Violations are report entries, never exceptions; the report is empty iff
    the stream is valid.
    """
    report = ValidationReport()
    last_index: Optional[int] = None
    last_ts: Optional[int] = None
    for pos, frame in enumerate(frames):
        if frame.camera != camera:
            report.violations.append(
                StreamViolation(pos, "camera", f"expected {camera.value}, got {frame.camera.value}")
            )
            continue
        if last_index is not None and frame.frame_index <= last_index:
            report.violations.append(
                StreamViolation(
                    pos, "frame_index", f"{frame.frame_index} does not increase past {last_index}"
                )
            )
        if last_ts is not None and frame.timestamp_ms < last_ts:
            report.violations.append(
                StreamViolation(
                    pos, "timestamp_ms", f"{frame.timestamp_ms} decreases from {last_ts}"
                )
            )
        last_index = frame.frame_index
        last_ts = frame.timestamp_ms
    return report


def write_stream(path, frames: Sequence[FrameObservation], header: Optional[dict] = None) -> None:
    """Write a stream file: optional header line, then one frame per line."""
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps({"header": header}, sort_keys=True, separators=(",", ":")) + "\n")
        for frame in frames:
            f.write(serialize_frame(frame) + "\n")


def read_stream(path) -> Tuple[Optional[dict], List[FrameObservation]]:
    """Read a stream file, returning (header-or-None, frames)."""
    header = None
    frames: List[FrameObservation] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            if lineno == 0:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    obj = None
                if isinstance(obj, dict) and "header" in obj:
                    header = obj["header"]
                    continue
            frames.append(parse_frame(line))
    return header, frames
