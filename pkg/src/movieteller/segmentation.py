"""Scene segmentation by thresholded HSV content change between frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, SegmentationError
from .frames import Frame, FrameSource

DEFAULT_THRESHOLD = 27.0
DEFAULT_MIN_SCENE_LEN = 15
DEFAULT_WEIGHTS = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class SceneBoundary:
    """Contiguous scene [start_frame, end_frame], both inclusive."""

    scene_id: int
    start_frame: int
    end_frame: int

    def __post_init__(self) -> None:
        if self.start_frame > self.end_frame:
            raise SegmentationError(
                f"scene {self.scene_id}: start {self.start_frame} > end {self.end_frame}"
            )

    @property
    def length(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class SegmentationConfig:
    threshold: float = DEFAULT_THRESHOLD
    min_scene_len: int = DEFAULT_MIN_SCENE_LEN
    weights: Tuple[float, float, float] = DEFAULT_WEIGHTS

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if self.min_scene_len < 1:
            raise ConfigError(f"min_scene_len must be >= 1, got {self.min_scene_len}")
        if any(w < 0 for w in self.weights) or sum(self.weights) == 0:
            raise ConfigError(f"weights must be non-negative and not all zero: {self.weights}")


def rgb_to_hsv255(pixels: np.ndarray) -> np.ndarray:
    """Convert uint8 RGB to HSV with all three channels on a 0-255 scale.

    Hue is the angle / 360 * 255 with no circular wrap; S = 0 and H = 0
    where max = 0, and H = 0 where the channels are equal.
    """
    rgb = pixels.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    cmin = rgb.min(axis=-1)
    delta = cmax - cmin

    with np.errstate(divide="ignore", invalid="ignore"):
        hue_deg = np.zeros_like(cmax)
        mask = delta > 0
        rm = mask & (cmax == r)
        gm = mask & ~rm & (cmax == g)
        bm = mask & ~rm & ~gm
        hue_deg[rm] = 60.0 * (((g - b)[rm] / delta[rm]) % 6.0)
        hue_deg[gm] = 60.0 * ((b - r)[gm] / delta[gm] + 2.0)
        hue_deg[bm] = 60.0 * ((r - g)[bm] / delta[bm] + 4.0)
        sat = np.where(cmax > 0, delta / np.where(cmax > 0, cmax, 1.0) * 255.0, 0.0)

    hue = hue_deg / 360.0 * 255.0
    return np.stack([hue, sat, cmax], axis=-1)


def content_score(
    prev: Frame, cur: Frame, weights: Tuple[float, float, float] = DEFAULT_WEIGHTS
) -> float:
    """Weighted mean of per-channel HSV mean absolute differences, in [0, 255]."""
    if (prev.width, prev.height) != (cur.width, cur.height):
        raise SegmentationError(
            f"dimension mismatch: frame {prev.index} is {prev.width}x{prev.height}, "
            f"frame {cur.index} is {cur.width}x{cur.height}"
        )
    hsv_a = rgb_to_hsv255(prev.pixels)
    hsv_b = rgb_to_hsv255(cur.pixels)
    diffs = np.abs(hsv_a - hsv_b).mean(axis=(0, 1))
    w = np.asarray(weights, dtype=np.float64)
    return float((w * diffs).sum() / w.sum())


def segment_from_scores(
    scores: Sequence[float], total_frames: int, config: SegmentationConfig
) -> List[SceneBoundary]:
    """Apply the cut rule to a precomputed score trace.

    scores[i] is the content score between frames i and i+1. A cut lands at
    frame i+1 when the score exceeds the threshold and the current scene has
    already reached min_scene_len frames; shorter would-be cuts are suppressed.
    """
    if total_frames < 1:
        raise SegmentationError("empty source")
    starts = [0]
    for i, score in enumerate(scores):
        cut_at = i + 1
        if score > config.threshold and cut_at - starts[-1] >= config.min_scene_len:
            starts.append(cut_at)
    bounds = []
    for sid, start in enumerate(starts):
        end = (starts[sid + 1] - 1) if sid + 1 < len(starts) else total_frames - 1
        bounds.append(SceneBoundary(sid, start, end))
    return bounds


def segment_scenes(source: FrameSource, config: SegmentationConfig) -> List[SceneBoundary]:
    """Partition the frame stream into contiguous scenes."""
    scores: List[float] = []
    prev: Frame | None = None
    count = 0
    for frame in source:
        if prev is not None:
            scores.append(content_score(prev, frame, config.weights))
        prev = frame
        count += 1
    if count == 0:
        raise SegmentationError("empty source")
    return segment_from_scores(scores, count, config)


def boundaries_to_records(bounds: Iterable[SceneBoundary], frame_rate: float) -> List[dict]:
    """Serializable scene records for scenes.json."""
    return [
        {
            "scene_id": b.scene_id,
            "start_frame": b.start_frame,
            "end_frame": b.end_frame,
            "start_ms": round(b.start_frame * 1000.0 / frame_rate),
            "end_ms": round(b.end_frame * 1000.0 / frame_rate),
        }
        for b in bounds
    ]
