import json
import socket
import threading

import pytest

from gauzetrack.engine import NonMonotonicFrame, SessionNotActive
from gauzetrack.ledger import (
    Adjustment,
    AdjustmentTarget,
    EventKind,
    InvalidAdjustment,
    load_event_log,
    replay_events,
)
from gauzetrack.protocol import (
    CLASS_GAUZE,
    CLASS_HAND,
    Camera,
    Detection,
    FrameObservation,
    serialize_frame,
)
from gauzetrack.service import (
    SessionAlreadyActive,
    SessionServer,
    SessionService,
    UnknownSession,
)

PERIOD_MS = 67


def mk_frame(idx, camera=Camera.IN, gauzes=0, hand=False):
    dets = [
        Detection(CLASS_GAUZE, 0.9, (0.1 * g + 0.01, 0.1, 0.1 * g + 0.08, 0.2))
        for g in range(gauzes)
    ]
    if hand:
        dets.append(Detection(CLASS_HAND, 0.9, (0.3, 0.3, 0.6, 0.7)))
    return FrameObservation(camera, idx, idx * PERIOD_MS, tuple(dets))


@pytest.fixture
def service(tmp_path):
    svc = SessionService(tmp_path, heartbeat_interval_s=0)
    yield svc
    svc.close()


def feed_placement(svc, sid, camera=Camera.IN, gauzes=2, start=0):
    """Hand visit placing `gauzes`, long enough to settle and commit."""
    idx = start
    for _ in range(4):
        svc.ingest(sid, mk_frame(idx, camera, gauzes=0, hand=True))
        idx += 1
    for _ in range(10):
        svc.ingest(sid, mk_frame(idx, camera, gauzes=gauzes))
        idx += 1
    return idx


class TestSessions:
    def test_start_and_snapshot(self, service):
        sid = service.start_session()
        snap = service.snapshot(sid)
        assert snap["session_id"] == sid
        assert snap["status"] == "ACTIVE"
        assert snap["total_in"] == 0
        assert snap["trays"]["IN"]["light"] == "GREEN"

    def test_second_start_rejected_while_active(self, service):
        service.start_session()
        with pytest.raises(SessionAlreadyActive):
            service.start_session()

    def test_new_session_allowed_after_end(self, service):
        sid = service.start_session()
        service.end_session(sid)
        assert service.start_session() != sid

    def test_unknown_session(self, service):
        with pytest.raises(UnknownSession):
            service.snapshot("nope")

    def test_ingest_drives_the_ledger(self, service):
        sid = service.start_session()
        feed_placement(service, sid, gauzes=3)
        snap = service.snapshot(sid)
        assert snap["total_in"] == 3
        assert snap["trays"]["IN"]["onscreen"] == 3
        assert snap["trays"]["IN"]["ingested"] == 14

    def test_paused_session_drops_frames(self, service):
        sid = service.start_session()
        service.ingest(sid, mk_frame(0))
        service.pause(sid)
        with pytest.raises(SessionNotActive):
            service.ingest(sid, mk_frame(1))
        service.resume(sid)
        service.ingest(sid, mk_frame(2))
        snap = service.snapshot(sid)
        assert snap["trays"]["IN"]["dropped"] == 1
        assert snap["trays"]["IN"]["ingested"] == 2

    def test_nonmonotonic_frame_dropped(self, service):
        sid = service.start_session()
        service.ingest(sid, mk_frame(5))
        with pytest.raises(NonMonotonicFrame):
            service.ingest(sid, mk_frame(5))
        assert service.snapshot(sid)["trays"]["IN"]["dropped"] == 1


class TestAdjustments:
    def test_adjustment_audited_and_persisted(self, service, tmp_path):
        sid = service.start_session()
        snap = service.adjust(
            sid, Adjustment(AdjustmentTarget.TOTAL_OUT, 1, "hand count", actor="nurse2")
        )
        assert snap["total_out"] == 1
        events = load_event_log(tmp_path / "sessions" / sid / "events.log")
        adj = [e for e in events if e.kind == EventKind.MANUAL_ADJUSTMENT]
        assert len(adj) == 1
        assert adj[0].reason == "hand count"
        assert adj[0].actor == "nurse2"

    def test_invalid_adjustment_rejected(self, service):
        sid = service.start_session()
        with pytest.raises(InvalidAdjustment):
            service.adjust(sid, Adjustment(AdjustmentTarget.TOTAL_IN, 1, ""))


class TestAnomalyCapture:
    def test_capture_is_contiguous_100_frame_suffix(self, service, tmp_path):
        sid = service.start_session()
        for idx in range(150):
            service.ingest(sid, mk_frame(idx, Camera.IN))
            service.ingest(sid, mk_frame(idx, Camera.OUT))
        capture_id = service.capture_anomaly(sid, note="suspected miscount")
        path = tmp_path / "sessions" / sid / "captures" / f"{capture_id}.ndjson"
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])["header"]
        assert header["capture_id"] == capture_id
        assert header["note"] == "suspected miscount"
        assert "ledger" in header
        frames = [json.loads(line) for line in lines[1:]]
        by_cam = {
            cam: [f["frame_index"] for f in frames if f["camera"] == cam]
            for cam in ("IN", "OUT")
        }
        for cam in ("IN", "OUT"):
            assert by_cam[cam] == list(range(50, 150))  # last 100, contiguous

    def test_capture_before_ring_full(self, service, tmp_path):
        sid = service.start_session()
        for idx in range(30):
            service.ingest(sid, mk_frame(idx, Camera.IN))
        capture_id = service.capture_anomaly(sid)
        path = tmp_path / "sessions" / sid / "captures" / f"{capture_id}.ndjson"
        assert len(path.read_text().splitlines()) == 31  # header + all 30 frames

    def test_capture_ids_are_sequential(self, service):
        sid = service.start_session()
        service.ingest(sid, mk_frame(0))
        assert service.capture_anomaly(sid).endswith("-cap001")
        assert service.capture_anomaly(sid).endswith("-cap002")


class TestPersistence:
    def test_ledger_recoverable_from_log_alone(self, service, tmp_path):
        sid = service.start_session()
        end = feed_placement(service, sid, gauzes=2)
        feed_placement(service, sid, gauzes=0, start=end)  # remove both
        service.adjust(sid, Adjustment(AdjustmentTarget.TOTAL_OUT, 2, "hand count"))
        service.end_session(sid)
        live = service._sessions[sid].engine.ledger
        rebuilt = replay_events(load_event_log(tmp_path / "sessions" / sid / "events.log"))
        assert rebuilt.to_canonical() == live.to_canonical()

    def test_reconciliation_written_at_end(self, service, tmp_path):
        sid = service.start_session()
        feed_placement(service, sid, gauzes=2)
        report = service.end_session(sid)
        on_disk = json.loads((tmp_path / "sessions" / sid / "reconciliation.json").read_text())
        assert on_disk == report.to_dict()
        assert not report.passed  # 2 placed, none out


class TestSubscribers:
    def test_fan_out_to_multiple_subscribers(self, service):
        sid = service.start_session()
        subs = [service.subscribe(sid) for _ in range(3)]
        service.ingest(sid, mk_frame(0, hand=True))  # light change + no events
        for sub in subs:
            record = sub.queue.get(timeout=1)
            assert record == {
                "kind": "light",
                "camera": "IN",
                "light": "YELLOW",
                "timestamp_ms": 0,
            }

    def test_event_records_carry_kind_and_payload(self, service):
        sid = service.start_session()
        sub = service.subscribe(sid)
        service.adjust(sid, Adjustment(AdjustmentTarget.TOTAL_IN, 1, "fix"))
        record = sub.queue.get(timeout=1)
        assert record["kind"] == "event"
        assert record["event"]["kind"] == "MANUAL_ADJUSTMENT"
        assert record["event"]["reason"] == "fix"
        assert record["event"]["total_in"] == 1

    def test_slow_subscriber_overflows(self, tmp_path):
        svc = SessionService(tmp_path, queue_bound=4, heartbeat_interval_s=0)
        try:
            sid = svc.start_session()
            sub = svc.subscribe(sid)
            for i in range(20):
                svc.adjust(sid, Adjustment(AdjustmentTarget.TOTAL_IN, 1, f"fill {i}"))
            assert sub.overflowed
        finally:
            svc.close()

    def test_reconciliation_pushed_at_end(self, service):
        sid = service.start_session()
        sub = service.subscribe(sid)
        service.end_session(sid)
        records = []
        while not sub.queue.empty():
            records.append(sub.queue.get_nowait())
        kinds = [r["kind"] for r in records if r is not None]
        assert "reconciliation" in kinds


class LineClient:
    """Minimal newline-JSON TCP client for exercising the wire protocol."""

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5)
        self.reader = self.sock.makefile("r", encoding="utf-8")

    def send(self, text):
        self.sock.sendall((text + "\n").encode("utf-8"))

    def recv(self):
        return json.loads(self.reader.readline())

    def rpc(self, **cmd):
        self.send(json.dumps(cmd))
        return self.recv()

    def close(self):
        self.sock.close()


@pytest.fixture
def server(tmp_path):
    svc = SessionService(tmp_path, heartbeat_interval_s=0)
    srv = SessionServer("127.0.0.1", 0, svc)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()
    svc.close()
    thread.join(timeout=5)


class TestWireProtocol:
    def test_command_and_ingestion_round_trip(self, server):
        ctl = LineClient(server.port)
        sid = ctl.rpc(cmd="start")["session_id"]

        cam = LineClient(server.port)
        cam.send(f"HELLO {sid} IN")
        assert cam.recv() == {"ok": True, "session_id": sid, "camera": "IN"}
        idx = 0
        for _ in range(4):
            cam.send(serialize_frame(mk_frame(idx, hand=True)))
            assert cam.recv() == {"ok": True, "frame_index": idx}
            idx += 1
        for _ in range(10):
            cam.send(serialize_frame(mk_frame(idx, gauzes=2)))
            assert cam.recv()["ok"]
            idx += 1
        cam.close()

        snap = ctl.rpc(cmd="snapshot", session_id=sid)["snapshot"]
        assert snap["total_in"] == 2
        report = ctl.rpc(cmd="end", session_id=sid)["report"]
        assert report["discrepancies"] == ["2 gauzes unaccounted for"]
        ctl.close()

    def test_ingestion_rejects_wrong_camera(self, server):
        ctl = LineClient(server.port)
        sid = ctl.rpc(cmd="start")["session_id"]
        cam = LineClient(server.port)
        cam.send(f"HELLO {sid} OUT")
        cam.recv()
        cam.send(serialize_frame(mk_frame(0, camera=Camera.IN)))
        reply = cam.recv()
        assert reply == {
            "ok": False,
            "error": "InvalidField",
            "message": reply["message"],
        }
        cam.close()
        ctl.close()

    def test_error_replies_keep_connection_alive(self, server):
        ctl = LineClient(server.port)
        assert ctl.rpc(cmd="snapshot", session_id="missing")["error"] == "UnknownSession"
        ctl.send("not json at all")
        assert not ctl.recv()["ok"]
        sid = ctl.rpc(cmd="start")["session_id"]  # still usable
        assert sid
        ctl.close()

    def test_subscribe_streams_records(self, server):
        ctl = LineClient(server.port)
        sid = ctl.rpc(cmd="start")["session_id"]

        sub = LineClient(server.port)
        assert sub.rpc(cmd="subscribe", session_id=sid)["ok"]

        ctl.rpc(cmd="adjust", session_id=sid, target="TOTAL_IN", delta=1, reason="fix")
        record = sub.recv()
        assert record["kind"] == "event"
        assert record["event"]["total_in"] == 1
        sub.close()
        ctl.close()

    def test_bad_handshake(self, server):
        cam = LineClient(server.port)
        cam.send("HELLO onlyone")
        assert cam.recv()["error"] == "BadHandshake"
        cam.close()
