"""Feed recorded detection streams through a local counting engine.

Frames from the two cameras are interleaved in timestamp order (ties: In
before Out) and stepped sequentially, which makes the outcome a pure
function of the recorded streams: pacing (`real` vs `max` speed) never
changes the final ledger because the engine consumes frame timestamps, not
wall-clock time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .config import EngineConfig
from .engine import CountEngine, LightChange, LightState
from .ledger import ReconciliationReport
from .protocol import Camera, FrameObservation


@dataclass
class ReplayOutcome:
    engine: CountEngine
    light_trace: List[LightChange]
    report: ReconciliationReport
    frames_processed: int

    def red_intervals(self) -> List[Tuple[Camera, int, int]]:
        """(camera, red_entry_ms, red_exit_ms) for every completed RED pulse."""
        intervals = []
        red_since = {}
        for change in self.light_trace:
            if change.light == LightState.RED:
                red_since[change.camera] = change.timestamp_ms
            elif change.camera in red_since:
                intervals.append(
                    (change.camera, red_since.pop(change.camera), change.timestamp_ms)
                )
        return intervals


def merge_streams(
    frames_in: Sequence[FrameObservation], frames_out: Sequence[FrameObservation]
) -> List[FrameObservation]:
    order = {Camera.IN: 0, Camera.OUT: 1}
    return sorted(
        list(frames_in) + list(frames_out),
        key=lambda f: (f.timestamp_ms, order[f.camera], f.frame_index),
    )


def replay_frames(
    frames_in: Sequence[FrameObservation],
    frames_out: Sequence[FrameObservation],
    cfg: Optional[EngineConfig] = None,
    speed: str = "max",
    end_session: bool = True,
) -> ReplayOutcome:
    """Run both streams through a fresh engine and reconcile at the end.

    speed "real" paces frames by their timestamps; "max" runs flat out.
    """
    engine = CountEngine(cfg)
    trace: List[LightChange] = []
    merged = merge_streams(frames_in, frames_out)
    wall_start = time.monotonic()
    for frame in merged:
        if speed == "real":
            target = wall_start + frame.timestamp_ms / 1000.0
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        result = engine.step(frame)
        trace.extend(result.light_changes)
    if end_session:
        engine.end()
    report = engine.ledger.reconcile()
    return ReplayOutcome(
        engine=engine,
        light_trace=trace,
        report=report,
        frames_processed=len(merged),
    )
