"""Hand-gated counting state machine over debounced per-tray detection counts.

Each tray runs a traffic-light FSM:

  GREEN  — trays untouched; counts tracked but only committed after a long
           sustained no-hand change (unattended commit, warning-flagged).
  YELLOW — a hand is over the tray; counting is suspended until the hand has
           been gone for a few frames and the debounced count has settled.
  RED    — brief commit pulse while the ledger updates, then back to GREEN.

All time comes from frame timestamps, never the wall clock, so identical
frame sequences always produce identical ledgers and event logs.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Sequence

from .config import EngineConfig
from .ledger import (
    EventKind,
    LedgerEvent,
    NegativeOnscreen,
    SessionLedger,
    SessionStatus,
)
from .protocol import CLASS_GAUZE, CLASS_HAND, Camera, FrameObservation


class CameraMismatch(ValueError):
    pass


class NonMonotonicFrame(ValueError):
    pass


class SessionNotActive(RuntimeError):
    pass


class LightState(str, Enum):
    GREEN = "GREEN"
    YELLOW = "YELLOW"
    RED = "RED"


@dataclass(frozen=True)
class LightChange:
    camera: Camera
    light: LightState
    timestamp_ms: int


def raw_gauze_count(frame: FrameObservation, cfg: EngineConfig) -> int:
    """Gauze detections at or above the confidence threshold (inclusive)."""
    return sum(
        1
        for d in frame.detections
        if d.class_id == CLASS_GAUZE and d.confidence >= cfg.confidence_threshold
    )


def hand_present(frame: FrameObservation, cfg: EngineConfig) -> bool:
    return any(
        d.class_id == CLASS_HAND and d.confidence >= cfg.confidence_threshold
        for d in frame.detections
    )


def debounced_count(window: Sequence[int], w: int) -> Optional[int]:
    """Strict-majority vote over the last w samples; None when indeterminate.

    Indeterminate when the window holds fewer than w samples or no value
    occurs more than w // 2 times.
    """
    if w < 1:
        raise ValueError("window size must be >= 1")
    if len(window) < w:
        return None
    recent = list(window)[-w:]
    value, count = Counter(recent).most_common(1)[0]
    return value if count > w // 2 else None


@dataclass
class TrayTracker:
    """Per-tray FSM state."""

    camera: Camera
    cfg: EngineConfig
    light: LightState = LightState.GREEN
    raw_window: Deque[int] = field(default_factory=deque)
    stable_onscreen: int = 0
    hand_absent_streak: int = 0
    stable_streak: int = 0
    last_debounced: Optional[int] = None
    red_until_ms: Optional[int] = None
    change_since_ms: Optional[int] = None  # first ms of a sustained no-hand divergence
    agree_streak: int = 0  # consecutive windows agreeing with stable_onscreen
    last_observed_debounced: Optional[int] = None  # latest defined window value in GREEN
    last_change_ms: int = 0
    last_frame_index: Optional[int] = None
    last_timestamp_ms: Optional[int] = None

    def __post_init__(self):
        self.raw_window = deque(self.raw_window, maxlen=self.cfg.debounce_window)

    def _push(self, raw: int) -> Optional[int]:
        self.raw_window.append(raw)
        return debounced_count(self.raw_window, self.cfg.debounce_window)


@dataclass
class StepResult:
    events: List[LedgerEvent]
    light_changes: List[LightChange]


def step(
    tracker: TrayTracker,
    ledger: SessionLedger,
    frame: FrameObservation,
    cfg: EngineConfig,
) -> StepResult:
    """Advance one tray by one frame; deterministic in the frame stream.

    Commits happen only at RED entry (or as a warning-flagged unattended
    commit in GREEN); never while a hand is over the tray.
    """
    if frame.camera != tracker.camera:
        raise CameraMismatch(f"frame for {frame.camera.value} fed to {tracker.camera.value} tray")
    if ledger.status != SessionStatus.ACTIVE:
        raise SessionNotActive(f"session is {ledger.status.value}")
    if tracker.last_frame_index is not None and frame.frame_index <= tracker.last_frame_index:
        raise NonMonotonicFrame(
            f"frame_index {frame.frame_index} after {tracker.last_frame_index}"
        )
    if tracker.last_timestamp_ms is not None and frame.timestamp_ms < tracker.last_timestamp_ms:
        raise NonMonotonicFrame(
            f"timestamp_ms {frame.timestamp_ms} before {tracker.last_timestamp_ms}"
        )
    tracker.last_frame_index = frame.frame_index
    tracker.last_timestamp_ms = frame.timestamp_ms

    t = frame.timestamp_ms
    hand = hand_present(frame, cfg)
    raw = raw_gauze_count(frame, cfg)
    events: List[LedgerEvent] = []
    lights: List[LightChange] = []

    def set_light(state: LightState) -> None:
        tracker.light = state
        lights.append(LightChange(tracker.camera, state, t))

    if tracker.light == LightState.RED:
        if tracker.red_until_ms is not None and t >= tracker.red_until_ms:
            tracker.red_until_ms = None
            set_light(LightState.GREEN)
        else:
            tracker._push(raw)
            return StepResult(events, lights)

    if tracker.light == LightState.GREEN:
        if hand:
            if tracker.change_since_ms is not None:
                # a no-hand count change was being tracked but never confirmed;
                # flag it so any later discrepancy is traceable
                events.append(
                    ledger._append(
                        t,
                        EventKind.WARNING,
                        tracker.camera,
                        0,
                        reason=(
                            f"unconfirmed count change on {tracker.camera.value} tray "
                            f"interrupted by hand"
                        ),
                    )
                )
            set_light(LightState.YELLOW)
            tracker.hand_absent_streak = 0
            tracker.stable_streak = 0
            tracker.last_debounced = None
            tracker.change_since_ms = None
            tracker.agree_streak = 0
            tracker.last_observed_debounced = None
            # counts seen while a hand covers the tray are occlusion artifacts;
            # start the debounce window fresh once the hand is gone
            tracker.raw_window.clear()
            return StepResult(events, lights)
        deb = tracker._push(raw)
        if deb is not None:
            tracker.last_observed_debounced = deb
        if deb is None:
            pass  # indeterminate window: divergence clock neither starts nor resets
        elif deb == tracker.stable_onscreen:
            # agreement must itself persist before it clears a running
            # divergence, so one flicker window cannot mask a real change
            tracker.agree_streak += 1
            if tracker.agree_streak >= cfg.stability_frames:
                tracker.change_since_ms = None
        else:
            tracker.agree_streak = 0
            if tracker.change_since_ms is None:
                tracker.change_since_ms = t
            if t - tracker.change_since_ms >= cfg.unattended_commit_ms:
                delta = deb - tracker.stable_onscreen
                try:
                    events.extend(
                        ledger.commit_delta(tracker.camera, delta, EventKind.UNATTENDED_COMMIT, t)
                    )
                except NegativeOnscreen:
                    events.append(ledger.events[-1])  # the rejection WARNING
                    tracker.change_since_ms = None
                    return StepResult(events, lights)
                events.append(
                    ledger._append(
                        t,
                        EventKind.WARNING,
                        tracker.camera,
                        delta,
                        reason=(
                            f"unattended count change on {tracker.camera.value} tray "
                            f"(no hand observed)"
                        ),
                    )
                )
                tracker.stable_onscreen = deb
                tracker.change_since_ms = None
                tracker.agree_streak = 0
                tracker.last_change_ms = t
                tracker.red_until_ms = t + cfg.red_duration_ms
                set_light(LightState.RED)
        return StepResult(events, lights)

    # YELLOW: observe, never commit, wait for hand-clear + stability.
    # Hand-covered frames are not pushed: their counts reflect occlusion,
    # not tray contents.
    if hand:
        tracker.hand_absent_streak = 0
        tracker.raw_window.clear()
        tracker.stable_streak = 0
        tracker.last_debounced = None
        return StepResult(events, lights)
    deb = tracker._push(raw)
    tracker.hand_absent_streak += 1
    if deb is None:
        tracker.stable_streak = 0
    elif deb == tracker.last_debounced:
        tracker.stable_streak += 1
    else:
        tracker.stable_streak = 1
    tracker.last_debounced = deb

    if (
        tracker.hand_absent_streak >= cfg.hand_clear_frames
        and deb is not None
        and tracker.stable_streak >= cfg.stability_frames
    ):
        delta = deb - tracker.stable_onscreen
        tracker.red_until_ms = t + cfg.red_duration_ms
        set_light(LightState.RED)
        if delta != 0:
            try:
                events.extend(ledger.commit_delta(tracker.camera, delta, EventKind.COMMIT, t))
                tracker.stable_onscreen = deb
                tracker.last_change_ms = t
            except NegativeOnscreen:
                events.append(ledger.events[-1])
        tracker.stable_streak = 0
        tracker.hand_absent_streak = 0
        tracker.last_debounced = None
        tracker.last_observed_debounced = None
    return StepResult(events, lights)


class CountEngine:
    """Two tray trackers sharing one ledger; the live counting core.

    Sequential and deterministic; callers embedding it in a concurrent
    pipeline must serialize calls (see service module).
    """

    def __init__(self, cfg: Optional[EngineConfig] = None, start_ms: int = 0):
        self.cfg = cfg or EngineConfig()
        self.cfg.validate()
        self.ledger = SessionLedger.start(start_ms)
        self.trackers: Dict[Camera, TrayTracker] = {
            Camera.IN: TrayTracker(Camera.IN, self.cfg),
            Camera.OUT: TrayTracker(Camera.OUT, self.cfg),
        }
        self.last_timestamp_ms = start_ms

    def step(self, frame: FrameObservation) -> StepResult:
        result = step(self.trackers[frame.camera], self.ledger, frame, self.cfg)
        if frame.timestamp_ms > self.last_timestamp_ms:
            self.last_timestamp_ms = frame.timestamp_ms
        return result

    def end(self) -> List[LedgerEvent]:
        """Close the session, flagging any tray whose observed count still
        disagrees with the committed count (a safety signal, not a commit)."""
        t = self.last_timestamp_ms
        events: List[LedgerEvent] = []
        for tracker in self.trackers.values():
            deb = tracker.last_observed_debounced
            unresolved = tracker.change_since_ms is not None or (
                tracker.light == LightState.GREEN
                and deb is not None
                and deb != tracker.stable_onscreen
            )
            if unresolved:
                events.append(
                    self.ledger._append(
                        t,
                        EventKind.WARNING,
                        tracker.camera,
                        0,
                        reason=(
                            f"unresolved count divergence on {tracker.camera.value} "
                            f"tray at session end"
                        ),
                    )
                )
        events.append(self.ledger.end(t))
        return events

    def light(self, camera: Camera) -> LightState:
        return self.trackers[camera].light

    def onscreen(self, camera: Camera) -> int:
        return self.trackers[camera].stable_onscreen
