"""Frame ingestion: Y4M streams and numbered image directories.

Both sources yield decoded RGB frames in index order and support random
access by frame index, which the keyframe selector needs.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import IngestError

_IMAGE_EXTS = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class Frame:
    """One decoded video frame (8-bit RGB, row-major)."""

    index: int
    timestamp_ms: int
    width: int
    height: int
    pixels: np.ndarray  # shape (height, width, 3), dtype uint8

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise IngestError(f"frame {self.index}: non-positive dimensions")
        if self.pixels.shape != (self.height, self.width, 3):
            raise IngestError(
                f"frame {self.index}: pixel buffer shape {self.pixels.shape} "
                f"does not match {self.height}x{self.width}x3"
            )


@dataclass(frozen=True)
class LumaStats:
    """Mean and population standard deviation of per-pixel luma (0-255)."""

    mean: float
    std: float


def luma_stats(frame: Frame) -> LumaStats:
    """BT.601 luma statistics over all pixels of a frame."""
    rgb = frame.pixels.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return LumaStats(mean=float(luma.mean()), std=float(luma.std()))


class FrameSource:
    """Ordered, single-consumer stream of frames with random access.

    All frames share one (width, height); iteration yields each frame
    exactly once, in index order.
    """

    width: int
    height: int
    frame_rate: float
    total_frames: Optional[int]
    origin: str

    def get_frame(self, index: int) -> Frame:
        raise NotImplementedError

    def _count(self) -> int:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Frame]:
        for i in range(self._count()):
            yield self.get_frame(i)

    def _timestamp_ms(self, index: int) -> int:
        return round(index * 1000.0 / self.frame_rate)


def open_source(origin: str | Path, kind: str, frame_rate: float | None = None) -> FrameSource:
    """Open a frame source.

    kind is "y4m" for an uncompressed YUV4MPEG2 stream file or "imagedir"
    for a directory of numbered PNG/JPEG frames.
    """
    path = Path(origin)
    if not path.exists():
        raise IngestError(f"no such path: {path}")
    if kind == "y4m":
        return Y4MSource(path)
    if kind == "imagedir":
        return ImageDirSource(path, frame_rate=frame_rate or 25.0)
    raise IngestError(f"unknown source kind: {kind!r}")


def _yuv420_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # BT.601 studio swing; chroma upsampled nearest-neighbor to full res.
    u_full = u.repeat(2, axis=0).repeat(2, axis=1)[: y.shape[0], : y.shape[1]]
    v_full = v.repeat(2, axis=0).repeat(2, axis=1)[: y.shape[0], : y.shape[1]]
    c = y.astype(np.float64) - 16.0
    d = u_full.astype(np.float64) - 128.0
    e = v_full.astype(np.float64) - 128.0
    r = 1.164383 * c + 1.596027 * e
    g = 1.164383 * c - 0.391762 * d - 0.812968 * e
    b = 1.164383 * c + 2.017232 * d
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


class Y4MSource(FrameSource):
    """Reader for uncompressed YUV4MPEG2 (4:2:0) stream files."""

    def __init__(self, path: Path) -> None:
        self.origin = str(path)
        self._path = path
        with open(path, "rb") as fh:
            header = fh.readline()
            if not header.startswith(b"YUV4MPEG2"):
                raise IngestError(f"{path}: not a YUV4MPEG2 stream")
            self.width, self.height, self.frame_rate = self._parse_header(header)
            if self.width <= 0 or self.height <= 0:
                raise IngestError(f"{path}: invalid dimensions in header")
            self._frame_bytes = self.width * self.height * 3 // 2
            self._offsets = self._index_frames(fh)
        if not self._offsets:
            raise IngestError(f"{path}: stream contains no frames")
        self.total_frames = len(self._offsets)

    @staticmethod
    def _parse_header(header: bytes) -> tuple[int, int, float]:
        width = height = 0
        rate = 25.0
        colorspace = "C420"
        for tag in header.decode("ascii", "replace").split()[1:]:
            if tag.startswith("W"):
                width = int(tag[1:])
            elif tag.startswith("H"):
                height = int(tag[1:])
            elif tag.startswith("F"):
                num, den = tag[1:].split(":")
                rate = int(num) / int(den)
            elif tag.startswith("C"):
                colorspace = tag
        if not colorspace.startswith("C420"):
            raise IngestError(f"unsupported Y4M colorspace {colorspace!r} (4:2:0 only)")
        return width, height, rate

    def _index_frames(self, fh) -> list[int]:
        offsets = []
        while True:
            line = fh.readline()
            if not line:
                break
            if not line.startswith(b"FRAME"):
                raise IngestError(f"{self._path}: malformed frame header near frame {len(offsets)}")
            offsets.append(fh.tell())
            fh.seek(self._frame_bytes, os.SEEK_CUR)
        return offsets

    def _count(self) -> int:
        return len(self._offsets)

    def get_frame(self, index: int) -> Frame:
        if not 0 <= index < len(self._offsets):
            raise IngestError(f"frame index {index} out of range")
        with open(self._path, "rb") as fh:
            fh.seek(self._offsets[index])
            raw = fh.read(self._frame_bytes)
        if len(raw) != self._frame_bytes:
            raise IngestError(f"{self._path}: truncated frame {index}")
        w, h = self.width, self.height
        y = np.frombuffer(raw, np.uint8, w * h).reshape(h, w)
        cw, ch = w // 2, h // 2
        u = np.frombuffer(raw, np.uint8, cw * ch, w * h).reshape(ch, cw)
        v = np.frombuffer(raw, np.uint8, cw * ch, w * h + cw * ch).reshape(ch, cw)
        return Frame(index, self._timestamp_ms(index), w, h, _yuv420_to_rgb(y, u, v))


class ImageDirSource(FrameSource):
    """Reader for a directory of numbered frame images (PNG/JPEG)."""

    def __init__(self, path: Path, frame_rate: float = 25.0) -> None:
        self.origin = str(path)
        self.frame_rate = frame_rate
        files = sorted(
            p for p in path.iterdir()
            if p.suffix.lower() in _IMAGE_EXTS and re.search(r"\d", p.stem)
        )
        if not files:
            raise IngestError(f"{path}: no frame images found")
        self._files = files
        first = self._load(0)
        self.width, self.height = first.shape[1], first.shape[0]
        self.total_frames = len(files)

    def _count(self) -> int:
        return len(self._files)

    def _load(self, index: int) -> np.ndarray:
        try:
            with Image.open(self._files[index]) as img:
                return np.asarray(img.convert("RGB"))
        except OSError as exc:
            raise IngestError(f"cannot decode frame {index} ({self._files[index]}): {exc}")

    def get_frame(self, index: int) -> Frame:
        if not 0 <= index < len(self._files):
            raise IngestError(f"frame index {index} out of range")
        pixels = self._load(index)
        if index > 0 and pixels.shape[:2] != (self.height, self.width):
            raise IngestError(
                f"frame {index} ({self._files[index].name}) is "
                f"{pixels.shape[1]}x{pixels.shape[0]}, expected {self.width}x{self.height}"
            )
        return Frame(index, self._timestamp_ms(index), self.width, self.height, pixels)


class ArraySource(FrameSource):
    """In-memory frame source, mainly for tests and synthetic inputs."""

    def __init__(self, frames: Sequence[np.ndarray], frame_rate: float = 25.0) -> None:
        if not frames:
            raise IngestError("empty frame list")
        self.origin = "<memory>"
        self.frame_rate = frame_rate
        self.height, self.width = frames[0].shape[:2]
        for i, f in enumerate(frames):
            if f.shape != (self.height, self.width, 3):
                raise IngestError(f"frame {i} has shape {f.shape}, expected uniform dimensions")
        self._frames = [np.ascontiguousarray(f, dtype=np.uint8) for f in frames]
        self.total_frames = len(frames)

    def _count(self) -> int:
        return len(self._frames)

    def get_frame(self, index: int) -> Frame:
        if not 0 <= index < len(self._frames):
            raise IngestError(f"frame index {index} out of range")
        return Frame(index, self._timestamp_ms(index), self.width, self.height, self._frames[index])
