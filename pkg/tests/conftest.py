"""Shared fixture builders: synthetic frames, Y4M writing, stub tools."""

from __future__ import annotations

import colorsys
import zlib
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import pytest
from PIL import Image

from movieteller.frames import Frame
from movieteller.segmentation import SegmentationConfig


# -- frame builders ----------------------------------------------------------

def solid(width: int, height: int, color: Tuple[int, int, int]) -> np.ndarray:
    return np.full((height, width, 3), color, dtype=np.uint8)


def checkerboard(width: int, height: int, cell: int = 1) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    mask = ((yy // cell + xx // cell) % 2).astype(np.uint8) * 255
    return np.stack([mask] * 3, axis=-1)


def noise(width: int, height: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def tinted_noise(width: int, height: int, base: Tuple[int, int, int], seed: int) -> np.ndarray:
    """Textured frame around a base color: a static vertical brightness
    gradient gives high spatial variance while small per-pixel jitter keeps
    consecutive frames nearly identical."""
    rng = np.random.default_rng(seed)
    scale = np.linspace(0.45, 1.0, height)[:, None, None]
    jitter = rng.integers(-8, 9, size=(height, width, 3))
    pixels = np.asarray(base, dtype=np.float64) * scale + jitter
    return np.clip(np.round(pixels), 0, 255).astype(np.uint8)


def make_frame(pixels: np.ndarray, index: int = 0, fps: float = 25.0) -> Frame:
    h, w = pixels.shape[:2]
    return Frame(index, round(index * 1000.0 / fps), w, h, np.ascontiguousarray(pixels))


# -- Y4M writing -------------------------------------------------------------

def rgb_to_yuv420(rgb: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward BT.601 studio-swing conversion with 2x2 chroma averaging."""
    f = rgb.astype(np.float64)
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    y = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
    u = 128.0 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0
    v = 128.0 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0

    def quantize(plane: np.ndarray) -> np.ndarray:
        return np.clip(np.round(plane), 0, 255).astype(np.uint8)

    def subsample(plane: np.ndarray) -> np.ndarray:
        h, w = plane.shape
        return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))

    return quantize(y), quantize(subsample(u)), quantize(subsample(v))


def write_y4m(path: Path, frames: Sequence[np.ndarray], fps: int = 25) -> Path:
    h, w = frames[0].shape[:2]
    assert w % 2 == 0 and h % 2 == 0, "4:2:0 needs even dimensions"
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 C420jpeg\n".encode())
        for frame in frames:
            y, u, v = rgb_to_yuv420(frame)
            fh.write(b"FRAME\n")
            fh.write(y.tobytes() + u.tobytes() + v.tobytes())
    return path


def save_png(path: Path, pixels: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PNG")
    return path


# -- independent HSV score oracle (pure python, colorsys) --------------------

def oracle_hsv255(pixel) -> Tuple[float, float, float]:
    h, s, v = colorsys.rgb_to_hsv(pixel[0] / 255.0, pixel[1] / 255.0, pixel[2] / 255.0)
    return (h * 255.0, s * 255.0, v * 255.0)


def oracle_content_score(a: np.ndarray, b: np.ndarray, weights=(1.0, 1.0, 1.0)) -> float:
    totals = [0.0, 0.0, 0.0]
    flat_a = a.reshape(-1, 3)
    flat_b = b.reshape(-1, 3)
    for pa, pb in zip(flat_a, flat_b):
        ha = oracle_hsv255(pa)
        hb = oracle_hsv255(pb)
        for c in range(3):
            totals[c] += abs(ha[c] - hb[c])
    n = len(flat_a)
    means = [t / n for t in totals]
    return sum(w * m for w, m in zip(weights, means)) / sum(weights)


def oracle_segment(frames: Sequence[np.ndarray], config: SegmentationConfig) -> List[Tuple[int, int]]:
    """Brute-force score trace plus the cut rule, independent of the
    streaming implementation."""
    starts = [0]
    for i in range(1, len(frames)):
        score = oracle_content_score(frames[i - 1], frames[i], config.weights)
        if score > config.threshold and i - starts[-1] >= config.min_scene_len:
            starts.append(i)
    out = []
    for k, start in enumerate(starts):
        end = starts[k + 1] - 1 if k + 1 < len(starts) else len(frames) - 1
        out.append((start, end))
    return out


# -- synthetic movie fixture ---------------------------------------------------

SCENE_COLORS = [(230, 130, 40), (40, 200, 120), (120, 40, 230)]


def movie_frames(frames_per_scene: int = 100, width: int = 64, height: int = 48) -> List[np.ndarray]:
    """Three textured scenes with hard cuts; every scene passes the gate."""
    frames = []
    for sid, base in enumerate(SCENE_COLORS):
        for i in range(frames_per_scene):
            frames.append(tinted_noise(width, height, base, seed=sid * 100000 + i))
    return frames


@pytest.fixture(scope="session")
def movie_y4m(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("fixture")
    return write_y4m(root / "movie.y4m", movie_frames())


@pytest.fixture(scope="session")
def cast_dir(tmp_path_factory) -> Path:
    """cast.json plus solid-color reference portraits for two characters."""
    import json

    root = tmp_path_factory.mktemp("cast")
    entries = []
    for name, color in [("Song Donglu", (230, 130, 40)), ("Director Jin", (120, 40, 230))]:
        refs = []
        for k in range(2):
            img = tinted_noise(64, 48, color, seed=zlib.crc32(f"{name}:{k}".encode()))
            p = save_png(root / f"{name.replace(' ', '_').lower()}_{k}.png", img)
            refs.append(str(p))
        entries.append(
            {"character_name": name, "actor_name": name, "reference_images": refs}
        )
    (root / "cast.json").write_text(json.dumps(entries, indent=2))
    return root
