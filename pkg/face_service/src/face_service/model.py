"""Face detection and embedding.

Detection uses scikit-image's pretrained LBP frontal-face cascade. Embeddings
are deterministic patch features: the face crop is blurred, downsampled,
contrast-normalized, and the span of canonical identity-free face renders
(size, lighting, framing variation) is projected out, leaving the
identity-specific residual. The result is zero-padded to the service
dimension and L2-normalized.
"""

from __future__ import annotations

import io
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageFilter
from skimage import data as skimage_data
from skimage.feature import Cascade

from .synthetic import nuisance_renders

DIMENSION = 512
MODEL_ID = "lbp-cascade+residual-patch-v1"

PATCH_RES = 16
INNER_FRACTION = 0.85
BLUR_RADIUS = 8
NUISANCE_RANK = 8
MIN_NUISANCE_VECTORS = 4
NMS_IOU = 0.3
DEFAULT_MIN_FACE_SIZE = 24

Box = Tuple[int, int, int, int]


class ModelError(RuntimeError):
    pass


def _iou(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union else 0.0


def _area(box: Box) -> int:
    return (box[2] - box[0]) * (box[3] - box[1])


class FaceModel:
    """One detector + embedder instance; loads everything eagerly so a broken
    installation fails at startup rather than on the first request."""

    dimension = DIMENSION
    model_id = MODEL_ID

    def __init__(self) -> None:
        cascade_file = skimage_data.lbp_frontal_face_cascade_filename()
        self._cascade = Cascade(cascade_file)
        self._nuisance_basis = self._build_nuisance_basis()

    def _build_nuisance_basis(self) -> np.ndarray:
        vectors = []
        for gray in nuisance_renders():
            boxes = self.detect_boxes(gray, DEFAULT_MIN_FACE_SIZE)
            # Some canonical renders fall below the cascade's sensitivity;
            # the subspace only needs the ones it finds cleanly.
            if len(boxes) != 1:
                continue
            vector = self._patch_vector(gray, boxes[0])
            if vector is not None:
                vectors.append(vector)
        if len(vectors) < MIN_NUISANCE_VECTORS:
            raise ModelError(
                f"only {len(vectors)} of {len(nuisance_renders())} canonical face "
                "renders were detected; detector installation is broken"
            )
        matrix = np.asarray(vectors)
        _, singular, vt = np.linalg.svd(matrix, full_matrices=False)
        significant = int(np.sum(singular > 1e-8 * singular[0]))
        return vt[: min(significant, NUISANCE_RANK)]

    def detect_boxes(self, gray: np.ndarray, min_face_size: int) -> List[Box]:
        """Cascade detections as (x1, y1, x2, y2), largest first, overlap-suppressed."""
        h, w = gray.shape
        side = min(h, w)
        if side < min_face_size:
            return []
        found = self._cascade.detect_multi_scale(
            img=gray,
            scale_factor=1.1,
            step_ratio=1,
            min_size=(min_face_size, min_face_size),
            max_size=(side, side),
        )
        boxes: List[Box] = []
        for f in found:
            x1 = max(0, int(f["c"]))
            y1 = max(0, int(f["r"]))
            x2 = min(w, int(f["c"]) + int(f["width"]))
            y2 = min(h, int(f["r"]) + int(f["height"]))
            if x1 < x2 and y1 < y2:
                boxes.append((x1, y1, x2, y2))
        boxes.sort(key=lambda b: (-_area(b), b))
        kept: List[Box] = []
        for box in boxes:
            if all(_iou(box, other) < NMS_IOU for other in kept):
                kept.append(box)
        return kept

    def _patch_vector(self, gray: np.ndarray, box: Box) -> Optional[np.ndarray]:
        x1, y1, x2, y2 = box
        w, h = x2 - x1, y2 - y1
        mx = int(w * (1.0 - INNER_FRACTION) / 2)
        my = int(h * (1.0 - INNER_FRACTION) / 2)
        crop = np.ascontiguousarray(gray[y1 + my : y2 - my, x1 + mx : x2 - mx])
        if crop.size == 0:
            return None
        img = Image.fromarray(crop).filter(ImageFilter.GaussianBlur(BLUR_RADIUS))
        small = np.asarray(
            img.resize((PATCH_RES, PATCH_RES), Image.BILINEAR), dtype=np.float64
        )
        v = small.flatten() - small.mean()
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            return None
        return v / norm

    def embed(self, gray: np.ndarray, box: Box) -> Optional[np.ndarray]:
        """Unit-norm identity embedding for one detected box, or None when the
        crop carries no usable structure."""
        v = self._patch_vector(gray, box)
        if v is None:
            return None
        basis = self._nuisance_basis
        v = v - basis.T @ (basis @ v)
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            return None
        out = np.zeros(DIMENSION)
        out[: v.size] = v / norm
        return out

    @staticmethod
    def _det_score(gray: np.ndarray, box: Box) -> float:
        # The LBP cascade exposes no confidence; report a contrast proxy.
        x1, y1, x2, y2 = box
        contrast = float(gray[y1:y2, x1:x2].std())
        return round(min(0.99, max(0.05, 0.5 + contrast / 255.0)), 6)

    def analyze(self, image_bytes: bytes, min_face_size: int = DEFAULT_MIN_FACE_SIZE) -> List[dict]:
        """Detect and embed every face in an encoded image.

        Raises ValueError when the payload is not a decodable image."""
        try:
            with Image.open(io.BytesIO(image_bytes)) as img:
                gray = np.asarray(img.convert("L"))
        except Exception as exc:
            raise ValueError(f"undecodable image: {exc}")
        faces = []
        for box in self.detect_boxes(gray, min_face_size):
            embedding = self.embed(gray, box)
            if embedding is None:
                continue
            faces.append(
                {
                    "bbox": list(box),
                    "det_score": self._det_score(gray, box),
                    "embedding": [round(float(v), 9) for v in embedding],
                }
            )
        return faces
