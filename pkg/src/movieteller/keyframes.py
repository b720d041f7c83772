"""Keyframe selection with the dual-threshold quality gate.

One representative frame per scene: the scan starts at the scene midpoint
and alternates outward until a frame passes the brightness/variance gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .errors import ConfigError
from .frames import Frame, LumaStats, luma_stats
from .segmentation import SceneBoundary

DEFAULT_MIN_MEAN = 15.0
DEFAULT_MAX_MEAN = 240.0
DEFAULT_MIN_STD = 10.0


@dataclass(frozen=True)
class GateConfig:
    min_mean: float = DEFAULT_MIN_MEAN
    max_mean: float = DEFAULT_MAX_MEAN
    min_std: float = DEFAULT_MIN_STD

    def __post_init__(self) -> None:
        if not (0 <= self.min_mean < self.max_mean <= 255):
            raise ConfigError(
                f"gate means must satisfy 0 <= min < max <= 255: {self.min_mean}, {self.max_mean}"
            )
        if self.min_std < 0:
            raise ConfigError(f"min_std must be >= 0, got {self.min_std}")


@dataclass(frozen=True)
class Keyframe:
    scene_id: int
    frame_index: int
    stats: LumaStats
    gate_passed: bool
    image_path: Optional[str] = None


def passes_gate(stats: LumaStats, config: GateConfig) -> bool:
    """True iff the frame is bright enough, not blown out, and non-flat."""
    return config.min_mean <= stats.mean <= config.max_mean and stats.std >= config.min_std


def candidate_order(start: int, end: int) -> Iterator[int]:
    """Midpoint first, then alternating outward: mid, mid+1, mid-1, mid+2, ..."""
    mid = (start + end) // 2
    yield mid
    offset = 1
    while True:
        emitted = False
        if mid + offset <= end:
            yield mid + offset
            emitted = True
        if mid - offset >= start:
            yield mid - offset
            emitted = True
        if not emitted:
            return
        offset += 1


def select_keyframe(
    scene: SceneBoundary,
    get_frame: Callable[[int], Frame],
    config: GateConfig,
) -> tuple[Keyframe, Frame]:
    """Pick the scene's keyframe; falls back to the max-std candidate when
    nothing passes the gate (flagged via gate_passed=False)."""
    best: tuple[Keyframe, Frame] | None = None
    for idx in candidate_order(scene.start_frame, scene.end_frame):
        frame = get_frame(idx)
        stats = luma_stats(frame)
        if passes_gate(stats, config):
            return Keyframe(scene.scene_id, idx, stats, True), frame
        if best is None or stats.std > best[0].stats.std:
            best = (Keyframe(scene.scene_id, idx, stats, False), frame)
    assert best is not None  # scene always has >= 1 frame
    return best
