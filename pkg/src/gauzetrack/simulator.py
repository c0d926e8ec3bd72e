"""Synthetic detection-stream generator with configurable detector flaws.

Compiles a scenario script into per-camera frame streams at the scripted
cadence. The noise channel models what a real detector gets wrong: missed
detections, spurious detections, bounding-box jitter, and the blindness to
heavily overlapped gauzes (any two gauze boxes overlapping at or beyond the
merge threshold collapse into one detection).

Determinism contract: identical (script, noise, seed) produce byte-identical
streams. The RNG is Python's Mersenne Twister, recorded in stream headers as
``python-mt19937``.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .config import ConfigInvalid, parse_key_values
from .geometry import Box, iou, layout_gauzes, overlap_fraction, union_box
from .protocol import CLASS_GAUZE, CLASS_HAND, Camera, Detection, FrameObservation
from .scenario import (
    EventKind,
    GroundTruth,
    ScenarioScript,
    ground_truth,
)

RNG_ALGORITHM = "python-mt19937"
STREAM_FORMAT_VERSION = 1

HAND_W = 0.35
HAND_H = 0.40
OCCLUSION_COVER = 0.5       # hand must cover this fraction of a gauze to hide it
LAYOUT_MAX_IOU = 0.1        # placement bound; keeps jittered boxes below merge range


@dataclass(frozen=True)
class NoiseModel:
    p_false_negative: float = 0.0   # per true detection per frame
    p_false_positive: float = 0.0   # per frame
    bbox_jitter_sigma: float = 0.0  # normalized units, per corner
    merge_iou_threshold: float = 1.0
    true_conf_mean: float = 0.9
    true_conf_spread: float = 0.0
    spurious_conf_mean: float = 0.4
    spurious_conf_spread: float = 0.1

    def validate(self) -> None:
        for name in ("p_false_negative", "p_false_positive", "merge_iou_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigInvalid(f"{name} must be in [0,1], got {v}")
        if self.bbox_jitter_sigma < 0:
            raise ConfigInvalid("bbox_jitter_sigma must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls()

    def to_dict(self) -> dict:
        return asdict(self)


def load_noise_model(path) -> NoiseModel:
    with open(path, "r", encoding="utf-8") as f:
        raw = parse_key_values(f.read())
    known = NoiseModel().to_dict()
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigInvalid(f"unknown noise key {key!r}")
        try:
            kwargs[key] = float(value)
        except ValueError:
            raise ConfigInvalid(f"bad value for {key}: {value!r}") from None
    model = NoiseModel(**kwargs)
    model.validate()
    return model


def _clamp(v: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return max(lo, min(hi, v))


def _jitter_box(box: Box, sigma: float, rng: random.Random) -> Box:
    x0, y0, x1, y1 = (c + rng.gauss(0.0, sigma) for c in box)
    x0, x1 = sorted((_clamp(x0), _clamp(x1)))
    y0, y1 = sorted((_clamp(y0), _clamp(y1)))
    if x1 <= x0:
        x0, x1 = max(0.0, x0 - 1e-6), min(1.0, x0 + 1e-6)
    if y1 <= y0:
        y0, y1 = max(0.0, y0 - 1e-6), min(1.0, y0 + 1e-6)
    return (x0, y0, x1, y1)


def merge_overlapping(detections: List[Detection], threshold: float) -> List[Detection]:
    """Collapse gauze pairs with IoU >= threshold into their union box.

    Repeats until no pair qualifies; hands are never merged.
    """
    dets = list(detections)
    merged = True
    while merged:
        merged = False
        for i in range(len(dets)):
            if dets[i].class_id != CLASS_GAUZE:
                continue
            for j in range(i + 1, len(dets)):
                if dets[j].class_id != CLASS_GAUZE:
                    continue
                if iou(dets[i].bbox, dets[j].bbox) >= threshold:
                    fused = Detection(
                        CLASS_GAUZE,
                        max(dets[i].confidence, dets[j].confidence),
                        union_box(dets[i].bbox, dets[j].bbox),
                    )
                    dets[i] = fused
                    del dets[j]
                    merged = True
                    break
            if merged:
                break
    return dets


def apply_noise(
    ideal: List[Detection], noise: NoiseModel, rng: random.Random
) -> List[Detection]:
    """Corrupt an ideal detection list; identity under the zero noise model."""
    out: List[Detection] = []
    for d in ideal:
        if noise.p_false_negative > 0 and rng.random() < noise.p_false_negative:
            continue
        box = d.bbox
        if noise.bbox_jitter_sigma > 0:
            box = _jitter_box(box, noise.bbox_jitter_sigma, rng)
        conf = d.confidence
        if noise.true_conf_spread > 0:
            conf = _clamp(rng.gauss(conf, noise.true_conf_spread))
        out.append(Detection(d.class_id, conf, box))
    if noise.p_false_positive > 0 and rng.random() < noise.p_false_positive:
        x0 = rng.uniform(0.0, 0.85)
        y0 = rng.uniform(0.0, 0.85)
        conf = _clamp(rng.gauss(noise.spurious_conf_mean, noise.spurious_conf_spread))
        out.append(Detection(CLASS_GAUZE, conf, (x0, y0, x0 + 0.1, y0 + 0.1)))
    return merge_overlapping(out, noise.merge_iou_threshold)


@dataclass
class SimulationResult:
    frames: Dict[Camera, List[FrameObservation]]
    truth: GroundTruth
    header: Dict[Camera, dict]


@dataclass
class _TrayState:
    boxes: List[Box] = field(default_factory=list)
    hand_box: Optional[Box] = None


def simulate(script: ScenarioScript, noise: NoiseModel, seed: int) -> SimulationResult:
    """Render a script into two camera streams plus script-derived truth."""
    noise.validate()
    layout_rng = random.Random(f"layout:{seed}")
    noise_rngs = {
        Camera.IN: random.Random(f"noise:IN:{seed}"),
        Camera.OUT: random.Random(f"noise:OUT:{seed}"),
    }
    trays = {Camera.IN: _TrayState(), Camera.OUT: _TrayState()}
    frames: Dict[Camera, List[FrameObservation]] = {Camera.IN: [], Camera.OUT: []}

    n_frames = script.duration_ms * script.fps // 1000
    pending = list(script.events)
    for i in range(n_frames):
        t = round(i * 1000 / script.fps)
        while pending and pending[0].at_ms <= t:
            e = pending.pop(0)
            tray = trays[e.tray]
            region = script.tray_regions[e.tray]
            if e.kind == EventKind.HAND_ENTER:
                hx0 = layout_rng.uniform(region[0], max(region[0], region[2] - HAND_W))
                hy0 = layout_rng.uniform(region[1], max(region[1], region[3] - HAND_H))
                tray.hand_box = (
                    hx0,
                    hy0,
                    min(1.0, hx0 + HAND_W),
                    min(1.0, hy0 + HAND_H),
                )
            elif e.kind == EventKind.HAND_EXIT:
                tray.hand_box = None
            elif e.kind == EventKind.PLACE:
                tray.boxes.extend(
                    layout_gauzes(
                        e.count, region, LAYOUT_MAX_IOU, layout_rng, existing=tray.boxes
                    )
                )
            elif e.kind == EventKind.REMOVE:
                for idx in sorted(
                    layout_rng.sample(range(len(tray.boxes)), e.count), reverse=True
                ):
                    del tray.boxes[idx]
        for cam in (Camera.IN, Camera.OUT):
            tray = trays[cam]
            ideal: List[Detection] = []
            for box in tray.boxes:
                if tray.hand_box is not None and overlap_fraction(box, tray.hand_box) >= OCCLUSION_COVER:
                    continue  # hand occludes this gauze
                ideal.append(Detection(CLASS_GAUZE, noise.true_conf_mean, box))
            if tray.hand_box is not None:
                ideal.append(Detection(CLASS_HAND, noise.true_conf_mean, tray.hand_box))
            noisy = apply_noise(ideal, noise, noise_rngs[cam])
            frames[cam].append(FrameObservation(cam, i, t, tuple(noisy)))

    headers = {
        cam: {
            "format": "gauze-stream",
            "version": STREAM_FORMAT_VERSION,
            "camera": cam.value,
            "seed": seed,
            "fps": script.fps,
            "rng": RNG_ALGORITHM,
            "noise": noise.to_dict(),
        }
        for cam in (Camera.IN, Camera.OUT)
    }
    return SimulationResult(frames=frames, truth=ground_truth(script), header=headers)
