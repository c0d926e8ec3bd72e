from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from gauzetrack.config import EngineConfig
from gauzetrack.engine import (
    CameraMismatch,
    CountEngine,
    LightState,
    NonMonotonicFrame,
    SessionNotActive,
    TrayTracker,
    debounced_count,
    hand_present,
    raw_gauze_count,
    step,
)
from gauzetrack.ledger import EventKind, SessionLedger, replay_events
from gauzetrack.protocol import CLASS_GAUZE, CLASS_HAND, Camera, Detection, FrameObservation

CFG = EngineConfig()
PERIOD_MS = 67  # ~15 fps


def mk_frame(idx, gauzes=0, hand=False, camera=Camera.IN, conf=0.9, t=None):
    dets = [
        Detection(CLASS_GAUZE, conf, (0.1 * g + 0.01, 0.1, 0.1 * g + 0.08, 0.2))
        for g in range(gauzes)
    ]
    if hand:
        dets.append(Detection(CLASS_HAND, 0.9, (0.3, 0.3, 0.6, 0.7)))
    return FrameObservation(camera, idx, t if t is not None else idx * PERIOD_MS, tuple(dets))


class TestFrameScreening:
    def test_count_at_threshold_inclusive(self):
        frame = mk_frame(0, gauzes=2, conf=0.20)
        assert raw_gauze_count(frame, CFG) == 2

    def test_count_below_threshold_excluded(self):
        frame = mk_frame(0, gauzes=2, conf=0.19)
        assert raw_gauze_count(frame, CFG) == 0

    def test_hand_respects_threshold(self):
        dets = (Detection(CLASS_HAND, 0.19, (0.3, 0.3, 0.6, 0.7)),)
        frame = FrameObservation(Camera.IN, 0, 0, dets)
        assert not hand_present(frame, CFG)
        assert hand_present(mk_frame(0, hand=True), CFG)


def majority_oracle(window, w):
    """Independent brute-force strict-majority vote."""
    if len(window) < w:
        return None
    recent = list(window)[-w:]
    for value in set(recent):
        if sum(1 for v in recent if v == value) * 2 > w:
            return value
    return None


class TestDebounce:
    def test_underfilled_window_indeterminate(self):
        assert debounced_count([2, 2, 2, 2], 5) is None

    def test_strict_majority(self):
        assert debounced_count([2, 2, 3, 2, 2], 5) == 2

    def test_tie_indeterminate(self):
        assert debounced_count([1, 2, 1, 2, 3], 5) is None

    def test_window_one(self):
        assert debounced_count([7], 1) == 7

    def test_bad_window_size(self):
        with pytest.raises(ValueError):
            debounced_count([1], 0)

    @given(
        st.lists(st.integers(0, 3), min_size=0, max_size=12),
        st.integers(1, 7),
    )
    def test_matches_brute_force_oracle(self, window, w):
        assert debounced_count(window, w) == majority_oracle(window, w)


def run_trace(engine, spec):
    """spec: list of (gauzes, hand); returns all emitted events."""
    events = []
    for idx, (gauzes, hand) in enumerate(spec):
        events.extend(engine.step(mk_frame(idx, gauzes, hand)).events)
    return events


class TestStateMachine:
    def test_hand_turns_light_yellow_same_frame(self):
        engine = CountEngine()
        engine.step(mk_frame(0, gauzes=0, hand=True))
        assert engine.light(Camera.IN) == LightState.YELLOW

    def test_hand_visit_commits_after_settling(self):
        # place 2 during a hand visit: expect exactly one COMMIT of +2
        engine = CountEngine()
        spec = [(0, True)] * 4 + [(2, False)] * 10
        events = run_trace(engine, spec)
        commits = [e for e in events if e.kind == EventKind.COMMIT]
        assert len(commits) == 1
        assert commits[0].delta == 2
        assert engine.ledger.total_in == 2
        assert engine.onscreen(Camera.IN) == 2

    def test_commit_timing_needs_hand_clear_and_stability(self):
        # settles at the 7th hand-free frame: 5 to fill the window,
        # 2 more for the stability streak to reach 3
        engine = CountEngine()
        spec = [(0, True)] * 3 + [(2, False)] * 7
        events = run_trace(engine, spec)
        commits = [e for e in events if e.kind == EventKind.COMMIT]
        assert len(commits) == 1
        assert commits[0].timestamp_ms == 9 * PERIOD_MS

    def test_no_commit_while_hand_lingers(self):
        engine = CountEngine()
        spec = [(0, True)] + [(2, True)] * 20
        events = run_trace(engine, spec)
        assert not any(e.kind == EventKind.COMMIT for e in events)
        assert engine.light(Camera.IN) == LightState.YELLOW

    def test_flicker_within_window_tolerated(self):
        # one dropped frame inside an otherwise stable run must not
        # change the committed delta
        engine = CountEngine()
        spec = [(0, True)] * 3 + [(2, False), (2, False), (1, False)] + [(2, False)] * 8
        run_trace(engine, spec)
        assert engine.ledger.total_in == 2

    def test_red_pulse_expires_next_frame(self):
        engine = CountEngine()
        spec = [(0, True)] * 3 + [(2, False)] * 7
        run_trace(engine, spec)
        assert engine.light(Camera.IN) == LightState.RED
        engine.step(mk_frame(10, gauzes=2))
        assert engine.light(Camera.IN) == LightState.GREEN

    def test_removal_commits_negative_delta(self):
        engine = CountEngine()
        spec = (
            [(0, True)] * 3 + [(3, False)] * 10  # place 3
            + [(3, True)] * 4 + [(1, False)] * 10  # take 2
        )
        events = run_trace(engine, spec)
        deltas = [e.delta for e in events if e.kind == EventKind.COMMIT]
        assert deltas == [3, -2]
        assert engine.ledger.total_in == 3  # removals leave Total In alone
        assert engine.ledger.onscreen_in == 1

    def test_unattended_change_commits_with_warning_after_2s(self):
        engine = CountEngine()
        events = []
        # settle at 2 first
        for idx, (g, h) in enumerate([(0, True)] * 3 + [(2, False)] * 10):
            events.extend(engine.step(mk_frame(idx, g, h)).events)
        # no hand ever appears, but the count drops to 1 and stays there
        for idx in range(13, 13 + 50):
            events.extend(engine.step(mk_frame(idx, gauzes=1)).events)
        unattended = [e for e in events if e.kind == EventKind.UNATTENDED_COMMIT]
        warnings = [e for e in events if e.kind == EventKind.WARNING]
        assert len(unattended) == 1
        assert unattended[0].delta == -1
        assert any("unattended" in (w.reason or "") for w in warnings)
        # forced commit waits out the full unattended window
        settle_ms = unattended[0].timestamp_ms - 13 * PERIOD_MS
        assert settle_ms >= CFG.unattended_commit_ms

    def test_brief_unattended_flicker_does_not_commit(self):
        engine = CountEngine()
        events = run_trace(
            engine,
            [(0, True)] * 3 + [(2, False)] * 10 + [(1, False)] * 10 + [(2, False)] * 40,
        )
        assert not any(e.kind == EventKind.UNATTENDED_COMMIT for e in events)
        assert engine.ledger.total_in == 2

    def test_hand_interrupting_unconfirmed_change_warns(self):
        engine = CountEngine()
        events = run_trace(
            engine,
            [(0, True)] * 3 + [(2, False)] * 10 + [(1, False)] * 8 + [(1, True)],
        )
        assert any(
            e.kind == EventKind.WARNING and "interrupted by hand" in (e.reason or "")
            for e in events
        )

    def test_session_end_flags_unresolved_divergence(self):
        engine = CountEngine()
        run_trace(engine, [(0, True)] * 3 + [(2, False)] * 10 + [(1, False)] * 8)
        events = engine.end()
        assert any(
            e.kind == EventKind.WARNING and "unresolved count divergence" in (e.reason or "")
            for e in events
        )
        assert events[-1].kind == EventKind.SESSION_END


class TestInputGuards:
    def test_camera_mismatch(self):
        tracker = TrayTracker(Camera.IN, CFG)
        ledger = SessionLedger.start(0)
        with pytest.raises(CameraMismatch):
            step(tracker, ledger, mk_frame(0, camera=Camera.OUT), CFG)

    def test_frame_index_must_advance(self):
        engine = CountEngine()
        engine.step(mk_frame(5))
        with pytest.raises(NonMonotonicFrame):
            engine.step(mk_frame(5))

    def test_timestamp_must_not_regress(self):
        engine = CountEngine()
        engine.step(mk_frame(0, t=1000))
        with pytest.raises(NonMonotonicFrame):
            engine.step(mk_frame(1, t=900))

    def test_paused_session_rejects_frames(self):
        engine = CountEngine()
        engine.step(mk_frame(0))
        engine.ledger.pause(100)
        with pytest.raises(SessionNotActive):
            engine.step(mk_frame(1))


# -- FSM property suite ------------------------------------------------------

trace_steps = st.lists(
    st.tuples(st.integers(0, 4), st.booleans()), min_size=1, max_size=120
)


@settings(max_examples=60, deadline=None)
@given(trace_steps)
def test_property_no_commit_while_yellow(spec):
    """A commit in a step implies the light left YELLOW in that same step."""
    engine = CountEngine()
    for idx, (gauzes, hand) in enumerate(spec):
        result = engine.step(mk_frame(idx, gauzes, hand))
        committed = any(
            e.kind in (EventKind.COMMIT, EventKind.UNATTENDED_COMMIT) for e in result.events
        )
        if committed:
            assert engine.light(Camera.IN) == LightState.RED


@settings(max_examples=60, deadline=None)
@given(trace_steps)
def test_property_hand_forces_yellow_same_step(spec):
    engine = CountEngine()
    for idx, (gauzes, hand) in enumerate(spec):
        before = engine.light(Camera.IN)
        engine.step(mk_frame(idx, gauzes, hand))
        if hand and before == LightState.GREEN:
            assert engine.light(Camera.IN) == LightState.YELLOW


@settings(max_examples=60, deadline=None)
@given(trace_steps)
def test_property_in_play_identity_and_nonnegative(spec):
    engine = CountEngine()
    for idx, (gauzes, hand) in enumerate(spec):
        engine.step(mk_frame(idx, gauzes, hand))
        ledger = engine.ledger
        assert ledger.in_play == ledger.total_in - ledger.total_out
        assert ledger.onscreen_in >= 0 and ledger.onscreen_out >= 0


@settings(max_examples=40, deadline=None)
@given(trace_steps)
def test_property_deterministic_and_replayable(spec):
    ledgers = []
    for _ in range(2):
        engine = CountEngine()
        for idx, (gauzes, hand) in enumerate(spec):
            engine.step(mk_frame(idx, gauzes, hand))
        engine.end()
        ledgers.append(engine.ledger)
    assert ledgers[0].to_canonical() == ledgers[1].to_canonical()
    assert replay_events(ledgers[0].events).to_canonical() == ledgers[0].to_canonical()
