"""Deterministic synthetic portrait renderer.

Used for two things: the canonical "generic face" renders that define the
embedder's nuisance subspace, and the curated fixture bundle the test suite
exercises the service against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw

CANVAS = 200
NOISE_SIGMA = 2.0


@dataclass(frozen=True)
class PersonSpec:
    """Geometry and shading parameters that define one synthetic identity."""

    face_w: int
    face_h: int
    skin: int
    eye_dx: int
    nose: int
    mouth_w: int
    beard: bool = False
    band: bool = False
    stripe: bool = False
    glasses: bool = False


@dataclass(frozen=True)
class Variant:
    """Per-photo nuisance conditions: background, exposure, pose shift."""

    background: int
    brightness: float
    shift: Tuple[int, int]
    seed: int


def render(person: PersonSpec, variant: Variant) -> np.ndarray:
    """Grayscale portrait of `person` under `variant` conditions."""
    img = Image.new("L", (CANVAS, CANVAS), variant.background)
    d = ImageDraw.Draw(img)
    cx, cy = CANVAS // 2 + variant.shift[0], CANVAS // 2 + variant.shift[1]
    fw, fh = person.face_w, person.face_h
    d.ellipse([cx - fw // 2, cy - fh // 2, cx + fw // 2, cy + fh // 2], fill=person.skin)
    ey = cy - 18
    for sx in (-1, 1):
        ex = cx + sx * person.eye_dx
        d.ellipse([ex - 8, ey - 6, ex + 8, ey + 6], fill=40)
        d.rectangle([ex - 10, ey - 16, ex + 10, ey - 12], fill=70)
        if person.glasses:
            d.ellipse([ex - 11, ey - 9, ex + 11, ey + 9], outline=20, width=3)
    d.ellipse([cx - person.nose, cy - 2, cx + person.nose, cy + 12], fill=160)
    d.rectangle(
        [cx - person.mouth_w // 2, cy + 26, cx + person.mouth_w // 2, cy + 34], fill=60
    )
    if person.beard:
        d.rectangle(
            [cx - person.mouth_w // 2 - 8, cy + 36,
             cx + person.mouth_w // 2 + 8, cy + fh // 2 - 2],
            fill=70,
        )
    if person.band:
        d.rectangle(
            [cx - fw // 2 + 6, cy - fh // 2 + 8, cx + fw // 2 - 6, cy - fh // 2 + 22],
            fill=60,
        )
    if person.stripe:
        d.rectangle(
            [cx - fw // 2 + 4, cy - 16, cx - fw // 2 + 16, cy + fh // 2 - 12], fill=75
        )
    arr = np.asarray(img).astype(np.float64) * variant.brightness
    rng = np.random.default_rng(variant.seed)
    arr = arr + rng.normal(0.0, NOISE_SIGMA, arr.shape)
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


# The identity-free face used to span the embedder's nuisance subspace.
GENERIC = PersonSpec(face_w=92, face_h=110, skin=200, eye_dx=27, nose=5, mouth_w=40)


def nuisance_renders() -> List[np.ndarray]:
    """Generic faces across sizes, backgrounds, exposures, and shifts.

    These carry everything an embedding should ignore (oval shape, lighting,
    framing) and none of what it should keep (identity markers)."""
    renders = []
    for fw, fh in [(80, 100), (92, 110), (104, 118)]:
        person = PersonSpec(face_w=fw, face_h=fh, skin=200, eye_dx=27, nose=5, mouth_w=40)
        for bg, brightness, shift in [
            (100, 1.00, (0, 0)),
            (125, 0.95, (4, -3)),
            (85, 1.05, (-4, 4)),
        ]:
            renders.append(render(person, Variant(bg, brightness, shift, seed=0)))
    return renders


# Curated fixture identities: each carries a gross low-frequency marker
# (forehead band / beard / cheek stripe) so identities separate cleanly.
FIXTURE_PERSONS: Dict[str, PersonSpec] = {
    "ada": PersonSpec(face_w=84, face_h=104, skin=235, eye_dx=22, nose=4, mouth_w=28, band=True),
    "bruno": PersonSpec(face_w=104, face_h=116, skin=160, eye_dx=33, nose=7, mouth_w=54, beard=True),
    "celia": PersonSpec(
        face_w=92, face_h=110, skin=205, eye_dx=28, nose=5, mouth_w=40,
        glasses=True, stripe=True,
    ),
}

FIXTURE_VARIANTS: List[Variant] = [
    Variant(background=100, brightness=1.00, shift=(0, 0), seed=1),
    Variant(background=120, brightness=0.96, shift=(3, -2), seed=2),
    Variant(background=85, brightness=1.04, shift=(-3, 3), seed=3),
]


def fixture_images() -> Dict[str, List[np.ndarray]]:
    return {
        name: [render(person, variant) for variant in FIXTURE_VARIANTS]
        for name, person in FIXTURE_PERSONS.items()
    }
