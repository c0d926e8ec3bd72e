"""Session ledger: Total In / Total Out / In Play with an append-only event log.

Every mutation of the totals is represented by exactly one event carrying a
snapshot of the resulting totals, which makes the log replayable: the ledger
is always reconstructible from its events alone (crash recovery, audit).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence

from .protocol import Camera


class EventKind(str, Enum):
    COMMIT = "COMMIT"
    UNATTENDED_COMMIT = "UNATTENDED_COMMIT"
    MANUAL_ADJUSTMENT = "MANUAL_ADJUSTMENT"
    WARNING = "WARNING"
    SESSION_START = "SESSION_START"
    SESSION_PAUSE = "SESSION_PAUSE"
    SESSION_RESUME = "SESSION_RESUME"
    SESSION_END = "SESSION_END"


class SessionStatus(str, Enum):
    ACTIVE = "ACTIVE"
    PAUSED = "PAUSED"
    ENDED = "ENDED"


class AdjustmentTarget(str, Enum):
    TOTAL_IN = "TOTAL_IN"
    TOTAL_OUT = "TOTAL_OUT"


class SessionNotActive(RuntimeError):
    pass


class SessionEnded(RuntimeError):
    pass


class InvalidTransition(RuntimeError):
    pass


class WouldGoNegative(ValueError):
    pass


class NegativeOnscreen(ValueError):
    pass


class InvalidAdjustment(ValueError):
    pass


class GapInSequence(ValueError):
    pass


class MalformedLog(ValueError):
    pass


@dataclass(frozen=True)
class LedgerEvent:
    sequence_no: int
    timestamp_ms: int
    kind: EventKind
    camera: Optional[Camera]
    delta: int
    total_in: int
    total_out: int
    onscreen_in: int
    onscreen_out: int
    reason: Optional[str] = None
    actor: Optional[str] = None

    def to_line(self) -> str:
        """Canonical one-line rendering: fixed key order, byte-stable."""
        return json.dumps(
            {
                "sequence_no": self.sequence_no,
                "timestamp_ms": self.timestamp_ms,
                "kind": self.kind.value,
                "camera": self.camera.value if self.camera else None,
                "delta": self.delta,
                "total_in": self.total_in,
                "total_out": self.total_out,
                "onscreen_in": self.onscreen_in,
                "onscreen_out": self.onscreen_out,
                "reason": self.reason,
                "actor": self.actor,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_line(cls, line: str) -> "LedgerEvent":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLog(f"bad event line: {e}") from e
        try:
            return cls(
                sequence_no=obj["sequence_no"],
                timestamp_ms=obj["timestamp_ms"],
                kind=EventKind(obj["kind"]),
                camera=Camera(obj["camera"]) if obj.get("camera") else None,
                delta=obj["delta"],
                total_in=obj["total_in"],
                total_out=obj["total_out"],
                onscreen_in=obj["onscreen_in"],
                onscreen_out=obj["onscreen_out"],
                reason=obj.get("reason"),
                actor=obj.get("actor"),
            )
        except (KeyError, ValueError) as e:
            raise MalformedLog(f"bad event field: {e}") from e


@dataclass(frozen=True)
class Adjustment:
    target: AdjustmentTarget
    delta: int
    reason: str
    actor: str = ""


@dataclass(frozen=True)
class ReconciliationReport:
    total_in: int
    total_out: int
    in_play: int
    onscreen_in: int
    onscreen_out: int
    passed: bool
    discrepancies: List[str]
    notes: List[str]

    def to_dict(self) -> dict:
        return {
            "total_in": self.total_in,
            "total_out": self.total_out,
            "in_play": self.in_play,
            "onscreen_in": self.onscreen_in,
            "onscreen_out": self.onscreen_out,
            "passed": self.passed,
            "discrepancies": self.discrepancies,
            "notes": self.notes,
        }


@dataclass
class SessionLedger:
    total_in: int = 0
    total_out: int = 0
    onscreen_in: int = 0
    onscreen_out: int = 0
    status: SessionStatus = SessionStatus.ACTIVE
    events: List[LedgerEvent] = field(default_factory=list)

    # -- event plumbing ----------------------------------------------------

    def _append(
        self,
        t: int,
        kind: EventKind,
        camera: Optional[Camera] = None,
        delta: int = 0,
        reason: Optional[str] = None,
        actor: Optional[str] = None,
    ) -> LedgerEvent:
        event = LedgerEvent(
            sequence_no=len(self.events) + 1,
            timestamp_ms=t,
            kind=kind,
            camera=camera,
            delta=delta,
            total_in=self.total_in,
            total_out=self.total_out,
            onscreen_in=self.onscreen_in,
            onscreen_out=self.onscreen_out,
            reason=reason,
            actor=actor,
        )
        self.events.append(event)
        return event

    # -- operations --------------------------------------------------------

    @classmethod
    def start(cls, t: int = 0) -> "SessionLedger":
        ledger = cls()
        ledger._append(t, EventKind.SESSION_START)
        return ledger

    @property
    def in_play(self) -> int:
        return self.total_in - self.total_out

    def commit_delta(
        self, camera: Camera, delta: int, kind: EventKind, t: int
    ) -> List[LedgerEvent]:
        """Apply a committed on-screen change; returns the appended events.

        In tray: additions raise Total In; removals mean gauzes taken into
        use, so Total In is unchanged. Out tray: Total Out follows the
        on-screen change in both directions, removals warning-flagged.
        delta = 0 is a no-op (no event).
        """
        if kind not in (EventKind.COMMIT, EventKind.UNATTENDED_COMMIT):
            raise ValueError(f"not a commit kind: {kind}")
        if delta == 0:
            return []
        emitted: List[LedgerEvent] = []
        if camera == Camera.IN:
            new_onscreen = self.onscreen_in + delta
            if new_onscreen < 0:
                emitted.append(
                    self._append(
                        t, EventKind.WARNING, camera, delta,
                        reason=f"commit rejected: onscreen_in would become {new_onscreen}",
                    )
                )
                raise NegativeOnscreen("onscreen_in would go negative")
            self.onscreen_in = new_onscreen
            if delta > 0:
                self.total_in += delta
            emitted.append(self._append(t, kind, camera, delta))
        else:
            new_onscreen = self.onscreen_out + delta
            new_total = self.total_out + delta
            if new_onscreen < 0 or new_total < 0:
                emitted.append(
                    self._append(
                        t, EventKind.WARNING, camera, delta,
                        reason=f"commit rejected: Out counts would go negative",
                    )
                )
                raise NegativeOnscreen("Out tray counts would go negative")
            self.onscreen_out = new_onscreen
            self.total_out = new_total
            emitted.append(self._append(t, kind, camera, delta))
            if delta < 0:
                emitted.append(
                    self._append(
                        t, EventKind.WARNING, camera, delta,
                        reason=f"{-delta} gauze(s) removed from Out tray",
                    )
                )
        return emitted

    def apply_adjustment(self, adj: Adjustment, t: int) -> LedgerEvent:
        """Manual correction of a total; audited with actor and reason."""
        if self.status == SessionStatus.ENDED:
            raise SessionEnded("cannot adjust an ended session")
        if adj.delta == 0:
            raise InvalidAdjustment("delta must be nonzero")
        if not adj.reason or not adj.reason.strip():
            raise InvalidAdjustment("reason must be non-empty")
        current = self.total_in if adj.target == AdjustmentTarget.TOTAL_IN else self.total_out
        if current + adj.delta < 0:
            self._append(
                t, EventKind.WARNING, None, adj.delta,
                reason=f"adjustment rejected: {adj.target.value} would become {current + adj.delta}",
                actor=adj.actor,
            )
            raise WouldGoNegative(f"{adj.target.value} would go negative")
        if adj.target == AdjustmentTarget.TOTAL_IN:
            self.total_in += adj.delta
        else:
            self.total_out += adj.delta
        return self._append(
            t, EventKind.MANUAL_ADJUSTMENT, None, adj.delta,
            reason=adj.reason, actor=adj.actor,
        )

    def pause(self, t: int) -> LedgerEvent:
        if self.status != SessionStatus.ACTIVE:
            raise InvalidTransition(f"cannot pause from {self.status.value}")
        self.status = SessionStatus.PAUSED
        return self._append(t, EventKind.SESSION_PAUSE)

    def resume(self, t: int) -> LedgerEvent:
        if self.status != SessionStatus.PAUSED:
            raise InvalidTransition(f"cannot resume from {self.status.value}")
        self.status = SessionStatus.ACTIVE
        return self._append(t, EventKind.SESSION_RESUME)

    def end(self, t: int) -> LedgerEvent:
        if self.status == SessionStatus.ENDED:
            raise InvalidTransition("session already ended")
        self.status = SessionStatus.ENDED
        return self._append(t, EventKind.SESSION_END)

    def reconcile(self) -> ReconciliationReport:
        """End-of-operation check: pass iff In Play = 0.

        Gauzes still resting on the In tray do not fail the check but are
        surfaced as an informational note.
        """
        discrepancies: List[str] = []
        notes: List[str] = []
        if self.in_play != 0:
            discrepancies.append(f"{abs(self.in_play)} gauzes unaccounted for")
        if self.onscreen_in > 0:
            notes.append(f"{self.onscreen_in} unused gauzes remain on In tray")
        return ReconciliationReport(
            total_in=self.total_in,
            total_out=self.total_out,
            in_play=self.in_play,
            onscreen_in=self.onscreen_in,
            onscreen_out=self.onscreen_out,
            passed=not discrepancies,
            discrepancies=discrepancies,
            notes=notes,
        )

    def to_canonical(self) -> str:
        """Byte-stable full-ledger rendering, for equality checks and persistence."""
        head = json.dumps(
            {
                "total_in": self.total_in,
                "total_out": self.total_out,
                "onscreen_in": self.onscreen_in,
                "onscreen_out": self.onscreen_out,
                "in_play": self.in_play,
                "status": self.status.value,
            },
            separators=(",", ":"),
        )
        return "\n".join([head] + [e.to_line() for e in self.events])


_STATUS_AFTER = {
    EventKind.SESSION_START: SessionStatus.ACTIVE,
    EventKind.SESSION_PAUSE: SessionStatus.PAUSED,
    EventKind.SESSION_RESUME: SessionStatus.ACTIVE,
    EventKind.SESSION_END: SessionStatus.ENDED,
}


def replay_events(events: Sequence[LedgerEvent]) -> SessionLedger:
    """Reconstruct a ledger purely from its event log.

    The log must open with SESSION_START and be densely numbered from 1.
    """
    if not events or events[0].kind != EventKind.SESSION_START:
        raise MalformedLog("log must start with SESSION_START")
    ledger = SessionLedger()
    for i, event in enumerate(events):
        if event.sequence_no != i + 1:
            raise GapInSequence(
                f"expected sequence_no {i + 1}, got {event.sequence_no}"
            )
        ledger.total_in = event.total_in
        ledger.total_out = event.total_out
        ledger.onscreen_in = event.onscreen_in
        ledger.onscreen_out = event.onscreen_out
        if event.kind in _STATUS_AFTER:
            ledger.status = _STATUS_AFTER[event.kind]
        ledger.events.append(event)
    return ledger


def load_event_log(path) -> List[LedgerEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(LedgerEvent.from_line(line))
    return events
