"""Throughput benchmark: two concurrent camera pipelines into one engine.

Synthesizes representative frames (ten gauzes plus a periodic hand) and
pushes them through the engine from one thread per stream, with all ledger
mutations serialized behind a single lock, mirroring the session service's
concurrency contract. Reports achieved frames/second per stream and
per-frame latency percentiles.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Dict, List

from .config import EngineConfig
from .engine import CountEngine
from .protocol import CLASS_GAUZE, CLASS_HAND, Camera, Detection, FrameObservation

GAUZES_PER_FRAME = 10
HAND_PERIOD = 30   # one hand dwell every this many frames
HAND_DWELL = 5


@dataclass
class StreamStats:
    camera: Camera
    frames: int
    elapsed_s: float
    latencies_ms: List[float]

    @property
    def fps(self) -> float:
        return self.frames / self.elapsed_s if self.elapsed_s > 0 else 0.0

    def percentile_ms(self, pct: float) -> float:
        if not self.latencies_ms:
            return 0.0
        ordered = sorted(self.latencies_ms)
        idx = min(len(ordered) - 1, int(round(pct / 100.0 * (len(ordered) - 1))))
        return ordered[idx]


@dataclass
class BenchReport:
    streams: Dict[Camera, StreamStats]
    fps_target: float

    @property
    def passed(self) -> bool:
        return all(s.fps >= self.fps_target for s in self.streams.values())

    def to_dict(self) -> dict:
        return {
            "fps_target": self.fps_target,
            "passed": self.passed,
            "streams": {
                cam.value: {
                    "frames": s.frames,
                    "elapsed_s": round(s.elapsed_s, 3),
                    "fps": round(s.fps, 1),
                    "latency_p50_ms": round(s.percentile_ms(50), 4),
                    "latency_p99_ms": round(s.percentile_ms(99), 4),
                }
                for cam, s in self.streams.items()
            },
        }


def _synthetic_frame(camera: Camera, index: int, frame_period_ms: float) -> FrameObservation:
    detections = []
    for g in range(GAUZES_PER_FRAME):
        x0 = (g % 5) * 0.18 + 0.02
        y0 = (g // 5) * 0.3 + 0.05
        detections.append(Detection(CLASS_GAUZE, 0.9, (x0, y0, x0 + 0.12, y0 + 0.12)))
    if index % HAND_PERIOD < HAND_DWELL:
        detections.append(Detection(CLASS_HAND, 0.9, (0.3, 0.3, 0.65, 0.7)))
    return FrameObservation(camera, index, round(index * frame_period_ms), tuple(detections))


def run_bench(
    duration_s: float,
    streams: int = 2,
    fps_target: float = 15.0,
    cfg: EngineConfig = None,
) -> BenchReport:
    """Run flat-out for duration_s wall seconds and measure what each stream sustained."""
    engine = CountEngine(cfg)
    lock = threading.Lock()
    cameras = [Camera.IN, Camera.OUT][: max(1, min(2, streams))]
    stats: Dict[Camera, StreamStats] = {}
    frame_period_ms = 1000.0 / fps_target

    def worker(camera: Camera) -> None:
        latencies: List[float] = []
        start = time.monotonic()
        deadline = start + duration_s
        index = 0
        while time.monotonic() < deadline:
            frame = _synthetic_frame(camera, index, frame_period_ms)
            t0 = time.perf_counter()
            with lock:
                engine.step(frame)
            latencies.append((time.perf_counter() - t0) * 1000.0)
            index += 1
        stats[camera] = StreamStats(camera, index, time.monotonic() - start, latencies)

    threads = [threading.Thread(target=worker, args=(cam,)) for cam in cameras]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    return BenchReport(streams=stats, fps_target=fps_target)
