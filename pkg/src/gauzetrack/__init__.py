"""Detector-agnostic surgical gauze count tracking."""

from .config import EngineConfig
from .engine import CountEngine, LightState
from .ledger import Adjustment, AdjustmentTarget, SessionLedger, replay_events
from .protocol import Camera, Detection, FrameObservation, parse_frame, serialize_frame
from .replay import replay_frames
from .scenario import ScenarioScript, ground_truth, parse_scenario, random_script
from .simulator import NoiseModel, simulate

__all__ = [
    "Adjustment",
    "AdjustmentTarget",
    "Camera",
    "CountEngine",
    "Detection",
    "EngineConfig",
    "FrameObservation",
    "LightState",
    "NoiseModel",
    "ScenarioScript",
    "SessionLedger",
    "ground_truth",
    "parse_frame",
    "parse_scenario",
    "random_script",
    "replay_events",
    "replay_frames",
    "serialize_frame",
    "simulate",
]
