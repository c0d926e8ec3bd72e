"""Counting-engine configuration with documented defaults.

Loadable from a plain ``key = value`` file; unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    confidence_threshold: float = 0.20  # inclusive: conf >= threshold counts
    debounce_window: int = 5            # W: sliding majority-vote window (frames)
    stability_frames: int = 3           # S: consecutive stable frames before commit
    hand_clear_frames: int = 3          # H: consecutive hand-free frames before commit
    red_duration_ms: int = 50           # red commit-pulse duration
    unattended_commit_ms: int = 2000    # sustained no-hand change before forced commit

    def validate(self) -> None:
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ConfigInvalid(f"confidence_threshold must be in [0,1], got {self.confidence_threshold}")
        if self.debounce_window < 1:
            raise ConfigInvalid(f"debounce_window must be >= 1, got {self.debounce_window}")
        if self.stability_frames < 1:
            raise ConfigInvalid(f"stability_frames must be >= 1, got {self.stability_frames}")
        if self.stability_frames > self.debounce_window:
            raise ConfigInvalid("stability_frames must be <= debounce_window")
        if self.hand_clear_frames < 1:
            raise ConfigInvalid(f"hand_clear_frames must be >= 1, got {self.hand_clear_frames}")
        if self.red_duration_ms < 0:
            raise ConfigInvalid(f"red_duration_ms must be >= 0, got {self.red_duration_ms}")
        if self.unattended_commit_ms < 1:
            raise ConfigInvalid(f"unattended_commit_ms must be >= 1, got {self.unattended_commit_ms}")


def parse_key_values(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def load_engine_config(path) -> EngineConfig:
    with open(path, "r", encoding="utf-8") as f:
        raw = parse_key_values(f.read())
    return engine_config_from_dict(raw)


def engine_config_from_dict(raw: dict) -> EngineConfig:
    known = {f.name: f.type for f in fields(EngineConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigInvalid(f"unknown config key {key!r}")
        try:
            kwargs[key] = float(value) if key == "confidence_threshold" else int(value)
        except (TypeError, ValueError):
            raise ConfigInvalid(f"bad value for {key}: {value!r}") from None
    cfg = EngineConfig(**kwargs)
    cfg.validate()
    return cfg
