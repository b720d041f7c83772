"""Fixture bundle generation: portrait PNGs plus an identity manifest.

Run `python -m face_service.fixtures [dest]` to (re)write the bundle; output
is deterministic, so regeneration is always byte-stable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Dict, List

from PIL import Image

from .synthetic import fixture_images

DEFAULT_BUNDLE = Path(__file__).resolve().parents[2] / "fixtures" / "faces"


def write_bundle(dest: Path = DEFAULT_BUNDLE) -> Path:
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, List[str]] = {}
    for name, images in sorted(fixture_images().items()):
        files = []
        for k, pixels in enumerate(images):
            filename = f"{name}_{k}.png"
            Image.fromarray(pixels).save(dest / filename, format="PNG")
            files.append(filename)
        manifest[name] = files
    (dest / "manifest.json").write_text(
        json.dumps({"persons": manifest}, indent=2, sort_keys=True) + "\n"
    )
    return dest


def load_manifest(bundle: Path = DEFAULT_BUNDLE) -> Dict[str, List[Path]]:
    bundle = Path(bundle)
    data = json.loads((bundle / "manifest.json").read_text())
    return {
        name: [bundle / f for f in files] for name, files in data["persons"].items()
    }


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_BUNDLE
    print(f"wrote fixture bundle to {write_bundle(target)}")
