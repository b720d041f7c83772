"""Face-identity grounding: reference database build, thresholded cosine
matching, greedy one-to-one assignment, and keyframe annotation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import GroundingError
from .facetool import FaceObservation, FaceTool

log = logging.getLogger(__name__)

DEFAULT_TAU_ID = 0.40
DEFAULT_DIMENSION = 512


def normalize(vector: np.ndarray) -> np.ndarray:
    """L2-normalize; rejects zero vectors."""
    vec = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise GroundingError("cannot normalize a zero embedding")
    return vec / norm


@dataclass(frozen=True)
class CastEntry:
    character_name: str
    actor_name: str
    reference_images: List[str]

    def __post_init__(self) -> None:
        if not self.character_name:
            raise GroundingError("cast entry with empty character_name")
        if not self.reference_images:
            raise GroundingError(f"cast entry {self.character_name!r} has no reference images")


@dataclass(frozen=True)
class ReferenceEmbedding:
    vector: np.ndarray
    source_image: str


@dataclass
class IdentityDatabase:
    """Reference face embeddings per character, unit-norm, fixed dimension."""

    dimension: int = DEFAULT_DIMENSION
    entries: Dict[str, List[ReferenceEmbedding]] = field(default_factory=dict)
    degraded: List[str] = field(default_factory=list)

    def add(self, name: str, vector: np.ndarray, source_image: str) -> None:
        vec = normalize(vector)
        if vec.shape != (self.dimension,):
            raise GroundingError(
                f"embedding for {name!r} has dimension {vec.shape[0]}, expected {self.dimension}"
            )
        self.entries.setdefault(name, []).append(ReferenceEmbedding(vec, source_image))

    @property
    def names(self) -> List[str]:
        return sorted(self.entries)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "degraded": sorted(self.degraded),
            "identities": {
                name: [
                    {"embedding": [float(v) for v in ref.vector], "source": ref.source_image}
                    for ref in refs
                ]
                for name, refs in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "IdentityDatabase":
        db = cls(dimension=int(data["dimension"]), degraded=list(data.get("degraded", [])))
        for name, refs in data.get("identities", {}).items():
            for ref in refs:
                db.add(name, np.asarray(ref["embedding"], dtype=np.float64), ref.get("source", ""))
        return db

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Path) -> "IdentityDatabase":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Grounding:
    """A verified (character, bounding box) fact for one keyframe."""

    character_name: str
    bbox: Tuple[int, int, int, int]
    similarity: float


def build_database(
    cast: Sequence[CastEntry], tool: FaceTool, dimension: Optional[int] = None
) -> IdentityDatabase:
    """Embed each cast member's reference images via the face tool.

    The largest detected face per image is taken as the subject. Entries with
    no usable reference image are marked degraded and excluded from matching.
    """
    db = IdentityDatabase(dimension=dimension or tool.dimension)
    for entry in cast:
        usable = 0
        for image_path in entry.reference_images:
            data = Path(image_path).read_bytes()
            faces = tool.detect(data)
            if not faces:
                log.warning(
                    "no face found in reference image %s for %r",
                    image_path, entry.character_name,
                )
                continue
            largest = max(
                faces, key=lambda f: (f.bbox[2] - f.bbox[0]) * (f.bbox[3] - f.bbox[1])
            )
            db.add(entry.character_name, largest.embedding, image_path)
            usable += 1
        if usable == 0:
            log.warning("identity %r degraded: no usable reference images", entry.character_name)
            db.entries.pop(entry.character_name, None)
            db.degraded.append(entry.character_name)
    return db


def _identity_similarities(
    embedding: np.ndarray, db: IdentityDatabase
) -> List[Tuple[str, float]]:
    query = normalize(embedding)
    if query.shape != (db.dimension,):
        raise GroundingError(
            f"query dimension {query.shape[0]} != database dimension {db.dimension}"
        )
    sims = []
    for name in db.names:
        refs = np.stack([ref.vector for ref in db.entries[name]])
        sims.append((name, float((refs @ query).max())))
    return sims


def match_face(
    embedding: np.ndarray, db: IdentityDatabase, tau_id: float = DEFAULT_TAU_ID
) -> Optional[Tuple[str, float]]:
    """Best identity for a face embedding, or None below the threshold.

    Per-identity score is the max cosine over that identity's references;
    ties break lexicographically by character name.
    """
    sims = _identity_similarities(embedding, db)
    if not sims:
        return None
    best_name, best_sim = min(sims, key=lambda item: (-item[1], item[0]))
    if best_sim > tau_id:
        return best_name, best_sim
    return None


def ground_keyframe(
    faces: Sequence[FaceObservation],
    db: IdentityDatabase,
    tau_id: float = DEFAULT_TAU_ID,
    image_size: Optional[Tuple[int, int]] = None,
) -> List[Grounding]:
    """Assign identities to detected faces, one-to-one, greedy by similarity.

    Faces with out-of-bounds boxes are discarded with a warning. An identity
    claimed by a higher-similarity face is unavailable to later faces; faces
    with no remaining identity above tau_id produce no grounding. Output is
    sorted by bbox x1.
    """
    observations = []
    for face in faces:
        if image_size is not None and not face.valid_for(*image_size):
            log.warning("discarding face with invalid bbox %s", face.bbox)
            continue
        observations.append(face)

    # (similarity, face order, name) triples, best first; ties resolved by
    # face order then name so assignment is deterministic.
    candidates = []
    for fi, face in enumerate(observations):
        for name, sim in _identity_similarities(face.embedding, db):
            if sim > tau_id:
                candidates.append((sim, fi, name))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    assigned_faces: Dict[int, Grounding] = {}
    taken_names: set = set()
    for sim, fi, name in candidates:
        if fi in assigned_faces or name in taken_names:
            continue
        assigned_faces[fi] = Grounding(name, observations[fi].bbox, sim)
        taken_names.add(name)

    return sorted(assigned_faces.values(), key=lambda g: (g.bbox[0], g.character_name))


def annotate(
    image: Image.Image, groundings: Sequence[Grounding], line_width: int = 3
) -> Image.Image:
    """Return a copy of the keyframe with each grounding drawn as a rectangle
    and the character name rendered above it; the original is untouched."""
    out = image.copy().convert("RGB")
    if not groundings:
        return out
    draw = ImageDraw.Draw(out)
    font = ImageFont.load_default()
    for g in groundings:
        x1, y1, x2, y2 = g.bbox
        x1 = max(0, min(x1, out.width - 1))
        x2 = max(x1 + 1, min(x2, out.width))
        y1 = max(0, min(y1, out.height - 1))
        y2 = max(y1 + 1, min(y2, out.height))
        draw.rectangle([x1, y1, x2 - 1, y2 - 1], outline=(255, 32, 32), width=line_width)
        text_y = max(0, y1 - 12)
        draw.text((x1, text_y), g.character_name, fill=(255, 255, 64), font=font)
    return out


def groundings_to_json(groundings: Sequence[Grounding]) -> List[dict]:
    return [
        {
            "character_name": g.character_name,
            "bbox": list(g.bbox),
            "similarity": g.similarity,
        }
        for g in groundings
    ]


def groundings_from_json(items: Sequence[dict]) -> List[Grounding]:
    return [
        Grounding(item["character_name"], tuple(item["bbox"]), float(item["similarity"]))
        for item in items
    ]


def load_cast(path: Path) -> List[CastEntry]:
    """Read cast.json: array of {character_name, actor_name, reference_images}."""
    data = json.loads(Path(path).read_text())
    return [
        CastEntry(
            character_name=item["character_name"],
            actor_name=item.get("actor_name", ""),
            reference_images=list(item["reference_images"]),
        )
        for item in data
    ]
