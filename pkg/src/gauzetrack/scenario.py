"""Scripted surgical scenarios and their script-derived ground truth.

A scenario is a human-writable text document: a versioned header of
``key = value`` lines and a timeline of tray events. Ground truth is
computed from the script alone, never from the generated detection streams,
so it stays independent of the noise channel under test.

Format::

    version = 1
    duration_ms = 20000
    fps = 15
    tray IN = 0.05,0.05,0.95,0.95     # optional, default shown
    event 500  HAND_ENTER IN
    event 800  PLACE IN 3
    event 1400 HAND_EXIT IN
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .geometry import Box
from .protocol import Camera

SCENARIO_VERSION = 1
DEFAULT_TRAY_REGION: Box = (0.05, 0.05, 0.95, 0.95)


class MalformedScenario(ValueError):
    def __init__(self, problems: List[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class EventKind(str, Enum):
    PLACE = "PLACE"
    REMOVE = "REMOVE"
    HAND_ENTER = "HAND_ENTER"
    HAND_EXIT = "HAND_EXIT"


@dataclass(frozen=True)
class ScriptEvent:
    at_ms: int
    kind: EventKind
    tray: Camera
    count: int = 0  # for PLACE / REMOVE

    def to_line(self) -> str:
        if self.kind in (EventKind.PLACE, EventKind.REMOVE):
            return f"event {self.at_ms} {self.kind.value} {self.tray.value} {self.count}"
        return f"event {self.at_ms} {self.kind.value} {self.tray.value}"


@dataclass
class ScenarioScript:
    duration_ms: int
    fps: int = 15
    tray_regions: Dict[Camera, Box] = field(
        default_factory=lambda: {Camera.IN: DEFAULT_TRAY_REGION, Camera.OUT: DEFAULT_TRAY_REGION}
    )
    events: List[ScriptEvent] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"version = {SCENARIO_VERSION}",
            f"duration_ms = {self.duration_ms}",
            f"fps = {self.fps}",
        ]
        for cam in (Camera.IN, Camera.OUT):
            r = self.tray_regions[cam]
            lines.append(f"tray {cam.value} = {r[0]},{r[1]},{r[2]},{r[3]}")
        lines.extend(e.to_line() for e in self.events)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GroundTruthRow:
    at_ms: int
    total_in: int
    total_out: int
    onscreen_in: int
    onscreen_out: int

    @property
    def in_play(self) -> int:
        return self.total_in - self.total_out


@dataclass
class GroundTruth:
    rows: List[GroundTruthRow]

    @property
    def final(self) -> GroundTruthRow:
        return self.rows[-1]


def _validate_script(script: ScenarioScript, problems: List[str]) -> None:
    last_at = -1
    onscreen = {Camera.IN: 0, Camera.OUT: 0}
    hand_in = {Camera.IN: False, Camera.OUT: False}
    for i, e in enumerate(script.events):
        where = f"event #{i + 1} at {e.at_ms}ms"
        if e.at_ms < last_at:
            problems.append(f"{where}: events out of time order")
        last_at = max(last_at, e.at_ms)
        if not (0 <= e.at_ms <= script.duration_ms):
            problems.append(f"{where}: outside [0, {script.duration_ms}]")
        if e.kind == EventKind.HAND_ENTER:
            if hand_in[e.tray]:
                problems.append(f"{where}: HAND_ENTER while hand already over {e.tray.value}")
            hand_in[e.tray] = True
        elif e.kind == EventKind.HAND_EXIT:
            if not hand_in[e.tray]:
                problems.append(f"{where}: HAND_EXIT without a hand over {e.tray.value}")
            hand_in[e.tray] = False
        elif e.kind in (EventKind.PLACE, EventKind.REMOVE):
            if e.count < 1:
                problems.append(f"{where}: count must be >= 1")
            if not hand_in[e.tray]:
                problems.append(
                    f"{where}: {e.kind.value} outside a hand interval on {e.tray.value}"
                )
            if e.kind == EventKind.PLACE:
                onscreen[e.tray] += e.count
            else:
                if e.count > onscreen[e.tray]:
                    problems.append(
                        f"{where}: REMOVE {e.count} exceeds {onscreen[e.tray]} on {e.tray.value}"
                    )
                else:
                    onscreen[e.tray] -= e.count
    for cam, inside in hand_in.items():
        if inside:
            problems.append(f"hand never exits {cam.value} tray")


def parse_scenario(text: str) -> ScenarioScript:
    """Parse and validate a scenario document; all problems reported at once."""
    problems: List[str] = []
    header: Dict[str, str] = {}
    trays: Dict[Camera, Box] = {}
    events: List[ScriptEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "event":
            if len(parts) < 4:
                problems.append(f"line {lineno}: bad event line {raw!r}")
                continue
            try:
                at_ms = int(parts[1])
                kind = EventKind(parts[2])
                tray = Camera(parts[3])
            except ValueError as e:
                problems.append(f"line {lineno}: {e}")
                continue
            count = 0
            if kind in (EventKind.PLACE, EventKind.REMOVE):
                if len(parts) != 5:
                    problems.append(f"line {lineno}: {kind.value} needs a count")
                    continue
                try:
                    count = int(parts[4])
                except ValueError:
                    problems.append(f"line {lineno}: bad count {parts[4]!r}")
                    continue
            events.append(ScriptEvent(at_ms, kind, tray, count))
        elif parts[0] == "tray" and len(parts) >= 2:
            try:
                cam = Camera(parts[1])
                coords = tuple(float(v) for v in line.split("=", 1)[1].split(","))
                if len(coords) != 4:
                    raise ValueError("need 4 coordinates")
                trays[cam] = coords  # type: ignore[assignment]
            except (ValueError, IndexError) as e:
                problems.append(f"line {lineno}: bad tray region: {e}")
        elif "=" in line:
            key, value = (p.strip() for p in line.split("=", 1))
            header[key] = value
        else:
            problems.append(f"line {lineno}: unrecognized line {raw!r}")

    if header.get("version") not in (None, str(SCENARIO_VERSION)):
        problems.append(f"unsupported version {header.get('version')!r}")
    try:
        duration_ms = int(header.get("duration_ms", ""))
    except ValueError:
        problems.append("missing or bad duration_ms")
        duration_ms = 0
    try:
        fps = int(header.get("fps", "15"))
    except ValueError:
        problems.append("bad fps")
        fps = 15
    if duration_ms >= 0 and fps < 1:
        problems.append("fps must be >= 1")

    regions = {
        Camera.IN: trays.get(Camera.IN, DEFAULT_TRAY_REGION),
        Camera.OUT: trays.get(Camera.OUT, DEFAULT_TRAY_REGION),
    }
    script = ScenarioScript(duration_ms=duration_ms, fps=fps, tray_regions=regions, events=events)
    _validate_script(script, problems)
    if problems:
        raise MalformedScenario(problems)
    return script


def load_scenario(path) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


def ground_truth(script: ScenarioScript) -> GroundTruth:
    """Expected ledger trajectory, derived purely from the script.

    Counting rules mirror the ledger's commit semantics: placements raise the
    tray's total; removals from the In tray take gauzes into use (Total In
    unchanged); removals from the Out tray lower Total Out.
    """
    total_in = total_out = onscreen_in = onscreen_out = 0
    rows = [GroundTruthRow(0, 0, 0, 0, 0)]
    for e in script.events:
        if e.kind == EventKind.PLACE:
            if e.tray == Camera.IN:
                onscreen_in += e.count
                total_in += e.count
            else:
                onscreen_out += e.count
                total_out += e.count
        elif e.kind == EventKind.REMOVE:
            if e.tray == Camera.IN:
                onscreen_in -= e.count
            else:
                onscreen_out -= e.count
                total_out -= e.count
        else:
            continue
        rows.append(GroundTruthRow(e.at_ms, total_in, total_out, onscreen_in, onscreen_out))
    return GroundTruth(rows)


def random_script(
    seed: int,
    balanced: bool = True,
    max_visits: int = 10,
    visit_gap_ms: int = 3000,
    fps: int = 15,
) -> ScenarioScript:
    """Generate a randomized but well-formed surgical timeline.

    Each hand visit does a single PLACE or REMOVE (the one-gauze-batch
    workflow), visits are separated by enough hand-free time for the engine
    to settle, and `balanced=True` appends visits that move every remaining
    gauze through the Out tray so the expected final In Play is zero.
    """
    rng = random.Random(f"script:{seed}")
    events: List[ScriptEvent] = []
    t = 1000
    onscreen_in = 0
    in_hand = 0  # taken from In, not yet placed on Out
    n_visits = rng.randint(3, max_visits)

    def visit(tray: Camera, kind: EventKind, count: int) -> None:
        nonlocal t
        enter = t
        mid = enter + rng.randint(200, 400)
        leave = mid + rng.randint(150, 350)
        events.append(ScriptEvent(enter, EventKind.HAND_ENTER, tray))
        events.append(ScriptEvent(mid, kind, tray, count))
        events.append(ScriptEvent(leave, EventKind.HAND_EXIT, tray))
        t = leave + visit_gap_ms + rng.randint(0, 400)

    # one-gauze-batch workflow: small moves per visit, In tray never piles up
    for _ in range(n_visits):
        choices = []
        if onscreen_in < 5:
            choices.append("place_in")
        if onscreen_in > 0:
            choices.append("take")
        if in_hand > 0:
            choices.append("place_out")
        action = rng.choice(choices)
        if action == "place_in":
            n = rng.randint(1, 3)
            visit(Camera.IN, EventKind.PLACE, n)
            onscreen_in += n
        elif action == "take":
            n = rng.randint(1, min(3, onscreen_in))
            visit(Camera.IN, EventKind.REMOVE, n)
            onscreen_in -= n
            in_hand += n
        else:
            n = rng.randint(1, min(3, in_hand))
            visit(Camera.OUT, EventKind.PLACE, n)
            in_hand -= n

    if balanced:
        while onscreen_in > 0:
            n = min(3, onscreen_in)
            visit(Camera.IN, EventKind.REMOVE, n)
            onscreen_in -= n
            in_hand += n
        while in_hand > 0:
            n = min(3, in_hand)
            visit(Camera.OUT, EventKind.PLACE, n)
            in_hand -= n

    duration_ms = t + 4500  # settling tail: room for a commit plus an unattended correction
    return ScenarioScript(duration_ms=duration_ms, fps=fps, events=events)
