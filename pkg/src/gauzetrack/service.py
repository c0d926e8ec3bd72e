"""Long-running session service: ingestion, engine, persistence, push stream.

One operation session at a time. The two camera streams may arrive
concurrently; every ledger mutation (commits from either tray, adjustments,
lifecycle changes) is serialized behind one lock, so subscribers and
snapshots always observe a prefix of a single total order of events.

Wire protocol (newline-delimited, one TCP port):

  ingestion:  ``HELLO <session_id> <IN|OUT>`` then one frame line per frame,
              each acknowledged with a one-line JSON reply.
  client API: one JSON command object per line (``{"cmd": "snapshot", ...}``);
              ``subscribe`` upgrades the connection to a push stream of
              records typed by a ``kind`` field (event / light / snapshot).

Persistence layout under the data directory::

  sessions/<id>/events.log            append-only ledger event log
  sessions/<id>/captures/<cid>.ndjson anomaly captures
  sessions/<id>/reconciliation.json   final report
"""

from __future__ import annotations

import json
import queue
import socket
import socketserver
import threading
import time
import uuid
from collections import deque
from pathlib import Path
from typing import Dict, List, Optional

from .config import ConfigInvalid, EngineConfig, engine_config_from_dict
from .engine import CountEngine, NonMonotonicFrame, SessionNotActive
from .ledger import (
    Adjustment,
    AdjustmentTarget,
    EventKind,
    InvalidAdjustment,
    InvalidTransition,
    LedgerEvent,
    ReconciliationReport,
    SessionEnded,
    SessionStatus,
    WouldGoNegative,
)
from .protocol import (
    Camera,
    FrameObservation,
    InvalidField,
    MalformedRecord,
    parse_frame,
    serialize_frame,
)

DEFAULT_FRAMES_TO_CAPTURE = 100
DEFAULT_QUEUE_BOUND = 256
DEFAULT_HEARTBEAT_S = 1.0

# event kinds whose persistence must hit disk before the ack (audit integrity)
_SYNC_KINDS = {
    EventKind.COMMIT,
    EventKind.UNATTENDED_COMMIT,
    EventKind.MANUAL_ADJUSTMENT,
    EventKind.SESSION_END,
}


class UnknownSession(KeyError):
    pass


class SessionAlreadyActive(RuntimeError):
    pass


class Subscriber:
    """Bounded push queue; overflow marks the subscriber for disconnect."""

    def __init__(self, bound: int):
        self.queue: "queue.Queue[Optional[dict]]" = queue.Queue(maxsize=bound)
        self.overflowed = False

    def push(self, record: dict) -> None:
        if self.overflowed:
            return
        try:
            self.queue.put_nowait(record)
        except queue.Full:
            # mark for disconnect; sender thread notices as it drains
            self.overflowed = True

    def close(self) -> None:
        try:
            self.queue.put_nowait(None)
        except queue.Full:
            pass


class _Session:
    def __init__(self, session_id: str, cfg: EngineConfig, frames_to_capture: int, root: Path):
        self.id = session_id
        self.cfg = cfg
        self.frames_to_capture = frames_to_capture
        self.engine = CountEngine(cfg)
        self.dir = root / "sessions" / session_id
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "captures").mkdir(exist_ok=True)
        self.log = open(self.dir / "events.log", "a", encoding="utf-8")
        self.ring: Dict[Camera, deque] = {
            Camera.IN: deque(maxlen=frames_to_capture),
            Camera.OUT: deque(maxlen=frames_to_capture),
        }
        self.ingested = {Camera.IN: 0, Camera.OUT: 0}
        self.dropped = {Camera.IN: 0, Camera.OUT: 0}
        self.capture_count = 0


class SessionService:
    """Session core: thread-safe, transport-agnostic."""

    def __init__(
        self,
        data_dir,
        queue_bound: int = DEFAULT_QUEUE_BOUND,
        heartbeat_interval_s: float = DEFAULT_HEARTBEAT_S,
        default_config: Optional[EngineConfig] = None,
    ):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.default_config = default_config
        self.queue_bound = queue_bound
        self.heartbeat_interval_s = heartbeat_interval_s
        self._lock = threading.RLock()
        self._sessions: Dict[str, _Session] = {}
        self._active: Optional[_Session] = None
        self._subscribers: List[Subscriber] = []
        self._stop = threading.Event()
        self._heartbeat_thread: Optional[threading.Thread] = None
        if heartbeat_interval_s and heartbeat_interval_s > 0:
            self._heartbeat_thread = threading.Thread(target=self._heartbeat_loop, daemon=True)
            self._heartbeat_thread.start()

    # -- internals ---------------------------------------------------------

    def _session(self, session_id: str) -> _Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def _persist_events(self, s: _Session, events: List[LedgerEvent]) -> None:
        sync = False
        for e in events:
            s.log.write(e.to_line() + "\n")
            sync = sync or e.kind in _SYNC_KINDS
        if sync:
            s.log.flush()

    def _push(self, record: dict) -> None:
        for sub in list(self._subscribers):
            sub.push(record)

    def _push_events(self, events: List[LedgerEvent]) -> None:
        # the ledger event's own "kind" (COMMIT, WARNING, ...) must not clash
        # with the record discriminator, so the payload is nested
        for e in events:
            self._push({"kind": "event", "event": json.loads(e.to_line())})

    def _heartbeat_loop(self) -> None:
        while not self._stop.wait(self.heartbeat_interval_s):
            with self._lock:
                if self._active is None or not self._subscribers:
                    continue
                record = {"kind": "snapshot", **self._snapshot_locked(self._active)}
            self._push(record)

    def _snapshot_locked(self, s: _Session) -> dict:
        engine = s.engine
        ledger = engine.ledger
        return {
            "session_id": s.id,
            "status": ledger.status.value,
            "total_in": ledger.total_in,
            "total_out": ledger.total_out,
            "in_play": ledger.in_play,
            "onscreen_in": ledger.onscreen_in,
            "onscreen_out": ledger.onscreen_out,
            "trays": {
                cam.value: {
                    "light": engine.light(cam).value,
                    "onscreen": engine.onscreen(cam),
                    "ingested": s.ingested[cam],
                    "dropped": s.dropped[cam],
                }
                for cam in (Camera.IN, Camera.OUT)
            },
            "last_sequence_no": ledger.events[-1].sequence_no if ledger.events else 0,
            "timestamp_ms": engine.last_timestamp_ms,
            "server_time_ms": int(time.time() * 1000),
        }

    # -- operations --------------------------------------------------------

    def start_session(
        self,
        config: Optional[dict] = None,
        frames_to_capture: int = DEFAULT_FRAMES_TO_CAPTURE,
    ) -> str:
        with self._lock:
            if self._active is not None and self._active.engine.ledger.status != SessionStatus.ENDED:
                raise SessionAlreadyActive(self._active.id)
            if isinstance(config, dict) and config:
                cfg = engine_config_from_dict(config)
            else:
                cfg = self.default_config or EngineConfig()
            cfg.validate()
            if frames_to_capture < 1:
                raise ConfigInvalid(f"frames_to_capture must be >= 1, got {frames_to_capture}")
            session_id = uuid.uuid4().hex[:12]
            s = _Session(session_id, cfg, frames_to_capture, self.root)
            self._sessions[session_id] = s
            self._active = s
            self._persist_events(s, s.engine.ledger.events)
            s.log.flush()
            self._push_events(s.engine.ledger.events)
        return session_id

    def ingest(self, session_id: str, frame: FrameObservation) -> dict:
        with self._lock:
            s = self._session(session_id)
            if s.engine.ledger.status != SessionStatus.ACTIVE:
                s.dropped[frame.camera] += 1
                raise SessionNotActive(f"session is {s.engine.ledger.status.value}")
            try:
                result = s.engine.step(frame)
            except NonMonotonicFrame:
                s.dropped[frame.camera] += 1
                raise
            s.ring[frame.camera].append(frame)
            s.ingested[frame.camera] += 1
            self._persist_events(s, result.events)
            self._push_events(result.events)
            for change in result.light_changes:
                self._push(
                    {
                        "kind": "light",
                        "camera": change.camera.value,
                        "light": change.light.value,
                        "timestamp_ms": change.timestamp_ms,
                    }
                )
            return {"ok": True, "frame_index": frame.frame_index}

    def snapshot(self, session_id: str) -> dict:
        with self._lock:
            return self._snapshot_locked(self._session(session_id))

    def adjust(self, session_id: str, adj: Adjustment) -> dict:
        with self._lock:
            s = self._session(session_id)
            before = len(s.engine.ledger.events)
            try:
                s.engine.ledger.apply_adjustment(adj, s.engine.last_timestamp_ms)
            finally:
                new_events = s.engine.ledger.events[before:]
                self._persist_events(s, new_events)
                s.log.flush()
                self._push_events(new_events)
            return self._snapshot_locked(s)

    def capture_anomaly(self, session_id: str, note: Optional[str] = None) -> str:
        with self._lock:
            s = self._session(session_id)
            if s.engine.ledger.status != SessionStatus.ACTIVE:
                raise SessionNotActive(f"session is {s.engine.ledger.status.value}")
            s.capture_count += 1
            capture_id = f"{s.id}-cap{s.capture_count:03d}"
            path = s.dir / "captures" / f"{capture_id}.ndjson"
            snapshot = self._snapshot_locked(s)
            with open(path, "w", encoding="utf-8") as f:
                header = {
                    "capture_id": capture_id,
                    "note": note,
                    "trigger_timestamp_ms": s.engine.last_timestamp_ms,
                    "ledger": {
                        k: snapshot[k]
                        for k in ("total_in", "total_out", "in_play", "onscreen_in", "onscreen_out")
                    },
                }
                f.write(json.dumps({"header": header}, sort_keys=True, separators=(",", ":")) + "\n")
                for cam in (Camera.IN, Camera.OUT):
                    for frame in s.ring[cam]:
                        f.write(serialize_frame(frame) + "\n")
            return capture_id

    def pause(self, session_id: str) -> dict:
        return self._lifecycle(session_id, "pause")

    def resume(self, session_id: str) -> dict:
        return self._lifecycle(session_id, "resume")

    def _lifecycle(self, session_id: str, op: str) -> dict:
        with self._lock:
            s = self._session(session_id)
            event = getattr(s.engine.ledger, op)(s.engine.last_timestamp_ms)
            self._persist_events(s, [event])
            s.log.flush()
            self._push_events([event])
            return self._snapshot_locked(s)

    def end_session(self, session_id: str) -> ReconciliationReport:
        with self._lock:
            s = self._session(session_id)
            events = s.engine.end()
            report = s.engine.ledger.reconcile()
            self._persist_events(s, events)
            s.log.flush()
            with open(s.dir / "reconciliation.json", "w", encoding="utf-8") as f:
                json.dump(report.to_dict(), f, indent=2)
            self._push_events(events)
            self._push({"kind": "reconciliation", **report.to_dict()})
            if self._active is s:
                self._active = None
            return report

    def subscribe(self, session_id: str) -> Subscriber:
        with self._lock:
            self._session(session_id)  # existence check
            sub = Subscriber(self.queue_bound)
            self._subscribers.append(sub)
            return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def close(self) -> None:
        self._stop.set()
        with self._lock:
            for sub in self._subscribers:
                sub.close()
            self._subscribers.clear()
            for s in self._sessions.values():
                s.log.close()


_ERROR_NAMES = {
    UnknownSession: "UnknownSession",
    SessionAlreadyActive: "SessionAlreadyActive",
    SessionNotActive: "SessionNotActive",
    NonMonotonicFrame: "NonMonotonicFrame",
    MalformedRecord: "MalformedRecord",
    InvalidField: "InvalidField",
    WouldGoNegative: "WouldGoNegative",
    InvalidAdjustment: "InvalidAdjustment",
    SessionEnded: "SessionEnded",
    InvalidTransition: "InvalidTransition",
    ConfigInvalid: "ConfigInvalid",
}


def _error_reply(exc: Exception) -> dict:
    name = next((n for t, n in _ERROR_NAMES.items() if isinstance(exc, t)), type(exc).__name__)
    return {"ok": False, "error": name, "message": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def _send(self, obj: dict) -> None:
        self.wfile.write((json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8"))

    def handle(self) -> None:
        service: SessionService = self.server.service  # type: ignore[attr-defined]
        first = self.rfile.readline()
        if not first:
            return
        line = first.decode("utf-8").strip()
        if line.startswith("HELLO "):
            self._handle_ingestion(service, line)
        else:
            self._handle_commands(service, line)

    def _handle_ingestion(self, service: SessionService, hello: str) -> None:
        parts = hello.split()
        if len(parts) != 3 or parts[2] not in ("IN", "OUT"):
            self._send({"ok": False, "error": "BadHandshake", "message": "expected HELLO <session_id> <IN|OUT>"})
            return
        session_id, camera = parts[1], Camera(parts[2])
        self._send({"ok": True, "session_id": session_id, "camera": camera.value})
        for raw in self.rfile:
            try:
                frame = parse_frame(raw.decode("utf-8").strip())
                if frame.camera != camera:
                    raise InvalidField("camera", f"stream declared {camera.value}")
                self._send(service.ingest(session_id, frame))
            except Exception as e:  # error is the reply; connection stays up
                self._send(_error_reply(e))

    def _handle_commands(self, service: SessionService, first_line: str) -> None:
        line: Optional[str] = first_line
        while line is not None:
            line = line.strip()
            if line:
                try:
                    cmd = json.loads(line)
                    if not isinstance(cmd, dict) or "cmd" not in cmd:
                        raise MalformedRecord("expected a JSON object with a 'cmd' field")
                    if self._dispatch(service, cmd):
                        return  # connection upgraded (subscribe) and finished
                except Exception as e:
                    self._send(_error_reply(e))
            raw = self.rfile.readline()
            line = raw.decode("utf-8") if raw else None

    def _dispatch(self, service: SessionService, cmd: dict) -> bool:
        name = cmd["cmd"]
        sid = cmd.get("session_id", "")
        if name == "start":
            session_id = service.start_session(
                cmd.get("config"), cmd.get("frames_to_capture", DEFAULT_FRAMES_TO_CAPTURE)
            )
            self._send({"ok": True, "session_id": session_id})
        elif name == "snapshot":
            self._send({"ok": True, "snapshot": service.snapshot(sid)})
        elif name == "adjust":
            adj = Adjustment(
                target=AdjustmentTarget(cmd.get("target", "")),
                delta=int(cmd.get("delta", 0)),
                reason=cmd.get("reason", ""),
                actor=cmd.get("actor", ""),
            )
            self._send({"ok": True, "snapshot": service.adjust(sid, adj)})
        elif name == "capture":
            capture_id = service.capture_anomaly(sid, cmd.get("note"))
            self._send({"ok": True, "capture_id": capture_id})
        elif name == "pause":
            self._send({"ok": True, "snapshot": service.pause(sid)})
        elif name == "resume":
            self._send({"ok": True, "snapshot": service.resume(sid)})
        elif name == "end":
            report = service.end_session(sid)
            self._send({"ok": True, "report": report.to_dict()})
        elif name == "subscribe":
            sub = service.subscribe(sid)
            self._send({"ok": True, "snapshot": service.snapshot(sid)})
            try:
                while True:
                    try:
                        record = sub.queue.get(timeout=0.25)
                    except queue.Empty:
                        if sub.overflowed:
                            self._send({"kind": "overflow", "message": "subscriber too slow"})
                            break
                        continue
                    if record is None:
                        if sub.overflowed:
                            self._send({"kind": "overflow", "message": "subscriber too slow"})
                        break
                    self._send(record)
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                service.unsubscribe(sub)
            return True
        else:
            self._send({"ok": False, "error": "UnknownCommand", "message": name})
        return False


class SessionServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, service: SessionService):
        super().__init__((host, port), _Handler)
        self.service = service

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(host: str, port: int, data_dir, config: Optional[EngineConfig] = None) -> SessionServer:
    """Create a server (not yet running); call serve_forever() or run in a thread."""
    service = SessionService(data_dir)
    server = SessionServer(host, port, service)
    return server
