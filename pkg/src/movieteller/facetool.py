"""Clients for the external face detection/embedding tool.

The pipeline never runs face models in-process; it talks to an HTTP sidecar
(or, for tests and mock runs, a deterministic digest-keyed stub).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import requests
from PIL import Image

from .errors import FaceToolError

DEFAULT_DIMENSION = 512


@dataclass(frozen=True)
class FaceObservation:
    """One detected face: pixel bbox (x1, y1, x2, y2), detector confidence,
    unit-norm embedding."""

    bbox: Tuple[int, int, int, int]
    det_score: float
    embedding: np.ndarray

    def valid_for(self, width: int, height: int) -> bool:
        x1, y1, x2, y2 = self.bbox
        return 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height


class FaceTool:
    """Interface shared by the HTTP client and the stub."""

    def detect(self, image_bytes: bytes) -> List[FaceObservation]:
        raise NotImplementedError

    def health(self) -> dict:
        raise NotImplementedError

    @property
    def dimension(self) -> int:
        raise NotImplementedError


def _parse_faces(payload: dict) -> List[FaceObservation]:
    faces = []
    for item in payload.get("faces", []):
        emb = np.asarray(item["embedding"], dtype=np.float64)
        faces.append(
            FaceObservation(
                bbox=tuple(int(v) for v in item["bbox"]),
                det_score=float(item["det_score"]),
                embedding=emb,
            )
        )
    return faces


class HttpFaceTool(FaceTool):
    """Client for the face tool sidecar (POST /detect, GET /health)."""

    def __init__(self, base_url: str, timeout: float = 60.0, session=None) -> None:
        self._base = base_url.rstrip("/")
        self._timeout = timeout
        self._session = session or requests.Session()
        self._dimension: Optional[int] = None

    def health(self) -> dict:
        try:
            resp = self._session.get(f"{self._base}/health", timeout=self._timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise FaceToolError(f"face tool unreachable at {self._base}: {exc}")

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self._dimension = int(self.health()["dimension"])
        return self._dimension

    def detect(self, image_bytes: bytes) -> List[FaceObservation]:
        payload = {"image": base64.b64encode(image_bytes).decode("ascii")}
        try:
            resp = self._session.post(
                f"{self._base}/detect", json=payload, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise FaceToolError(f"face tool request failed: {exc}")
        if resp.status_code != 200:
            raise FaceToolError(f"face tool returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return _parse_faces(resp.json())
        except (ValueError, KeyError, TypeError) as exc:
            raise FaceToolError(f"malformed face tool reply: {exc}")


def image_digest(image_bytes: bytes) -> str:
    return hashlib.sha256(image_bytes).hexdigest()


def _digest_embedding(digest: str, dimension: int) -> np.ndarray:
    rng = np.random.default_rng(int(digest[:16], 16))
    vec = rng.standard_normal(dimension)
    return vec / np.linalg.norm(vec)


class DeterministicStubTool(FaceTool):
    """Digest-keyed stand-in for the face service.

    Replies are a pure function of the image bytes: an explicit mapping from
    image digest to observations wins; otherwise a single centered face is
    synthesized with an embedding seeded by the digest. Flat images (zero
    pixel variance) yield no faces, so black screens stay face-free.
    """

    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        faces_by_digest: Optional[Dict[str, List[FaceObservation]]] = None,
    ) -> None:
        self._dimension = dimension
        self._mapping = dict(faces_by_digest or {})

    @property
    def dimension(self) -> int:
        return self._dimension

    def health(self) -> dict:
        return {"status": "ok", "model_id": "stub", "dimension": self._dimension}

    def register(self, image_bytes: bytes, faces: Sequence[FaceObservation]) -> str:
        digest = image_digest(image_bytes)
        self._mapping[digest] = list(faces)
        return digest

    def detect(self, image_bytes: bytes) -> List[FaceObservation]:
        digest = image_digest(image_bytes)
        if digest in self._mapping:
            return list(self._mapping[digest])
        try:
            with Image.open(io.BytesIO(image_bytes)) as img:
                rgb = np.asarray(img.convert("RGB"))
        except OSError as exc:
            raise FaceToolError(f"stub cannot decode image: {exc}")
        if rgb.std() == 0:
            return []
        h, w = rgb.shape[:2]
        if w < 4 or h < 4:
            return []
        bbox = (w // 4, h // 4, max(w // 4 + 2, 3 * w // 4), max(h // 4 + 2, 3 * h // 4))
        return [FaceObservation(bbox, 0.99, _digest_embedding(digest, self._dimension))]


def faces_to_json(faces: Sequence[FaceObservation]) -> List[dict]:
    return [
        {
            "bbox": list(f.bbox),
            "det_score": f.det_score,
            "embedding": [float(v) for v in f.embedding],
        }
        for f in faces
    ]
