"""Prompt rendering for the three abstraction stages, with grounding
injection and ablation-mode switching (no_hint / name_only / full)."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .errors import ContextLengthExceeded, PromptError
from .identity import Grounding

LEAD_IN_FULL = (
    "To assist you, I have identified the following characters and their "
    "locations in the image:"
)
LEAD_IN_NAMES = "To assist you, I have identified the following characters in the image:"
NO_CAST_SENTENCE = "No principal cast members were identified in this frame."
CLOSING_WITH_IDENTITIES = (
    "Please generate the scene summary by combining the character identities "
    "with the visual content:"
)
CLOSING_VISUAL_ONLY = "Please generate the scene summary based on the visual content:"


class GroundingMode(enum.Enum):
    NO_HINT = "no_hint"
    NAME_ONLY = "name_only"
    FULL = "full"

    @classmethod
    def parse(cls, value: str) -> "GroundingMode":
        normalized = value.replace("-", "_").lower()
        for mode in cls:
            if mode.value == normalized:
                return mode
        raise PromptError(f"unknown grounding mode {value!r}")


@dataclass(frozen=True)
class PromptTemplates:
    """The three template bodies; placeholder syntax is {{name}}."""

    desp: str
    sum: str
    synopsis: str

    @classmethod
    def packaged(cls) -> "PromptTemplates":
        pkg = resources.files("movieteller.prompts")
        return cls(
            desp=(pkg / "desp.txt").read_text(),
            sum=(pkg / "sum.txt").read_text(),
            synopsis=(pkg / "synopsis.txt").read_text(),
        )

    @classmethod
    def from_dir(cls, directory: Path) -> "PromptTemplates":
        directory = Path(directory)
        try:
            return cls(
                desp=(directory / "desp.txt").read_text(),
                sum=(directory / "sum.txt").read_text(),
                synopsis=(directory / "synopsis.txt").read_text(),
            )
        except OSError as exc:
            raise PromptError(f"cannot load prompt templates from {directory}: {exc}")

    def digest(self) -> str:
        h = hashlib.sha256()
        for body in (self.desp, self.sum, self.synopsis):
            h.update(body.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


def _fill(template: str, **values: str) -> str:
    # Single-pass substitution: placeholder-looking text inside the values
    # stays literal, so user content round-trips intact.
    out = template
    for key, value in values.items():
        token = "{{" + key + "}}"
        if token not in out:
            raise PromptError(f"template is missing placeholder {token}")
        out = out.replace(token, value)
    return out


def render_description_prompt(
    groundings: Sequence[Grounding],
    mode: GroundingMode,
    templates: Optional[PromptTemplates] = None,
) -> str:
    """Render the scene-description prompt for one annotated keyframe."""
    templates = templates or PromptTemplates.packaged()
    if mode is GroundingMode.FULL:
        xs = [g.bbox[0] for g in groundings]
        if xs != sorted(xs):
            raise PromptError("groundings must be sorted by bbox x1 in full mode")

    if mode is GroundingMode.NO_HINT:
        assistance = ""
        closing = CLOSING_VISUAL_ONLY
    elif not groundings:
        assistance = NO_CAST_SENTENCE
        closing = CLOSING_VISUAL_ONLY
    elif mode is GroundingMode.NAME_ONLY:
        lines = [f"- The actor '{g.character_name}' appears in this scene." for g in groundings]
        assistance = "\n".join([LEAD_IN_NAMES] + lines)
        closing = CLOSING_WITH_IDENTITIES
    else:
        lines = [
            "- The actor '{name}' is located within the bounding box "
            "[{x1}, {y1}, {x2}, {y2}].".format(
                name=g.character_name, x1=g.bbox[0], y1=g.bbox[1], x2=g.bbox[2], y2=g.bbox[3]
            )
            for g in groundings
        ]
        assistance = "\n".join([LEAD_IN_FULL] + lines)
        closing = CLOSING_WITH_IDENTITIES

    text = _fill(templates.desp, assistance=assistance, closing=closing)
    if mode is GroundingMode.NO_HINT:
        text = text.replace("\n\n\n", "\n\n")
    return text


def render_chapter_prompt(
    scene_descriptions: Sequence[str],
    templates: Optional[PromptTemplates] = None,
    max_chars: Optional[int] = None,
) -> str:
    """Render the chapter-summary prompt over ordered scene descriptions."""
    if not scene_descriptions:
        raise PromptError("chapter prompt needs at least one scene description")
    templates = templates or PromptTemplates.packaged()
    block = "\n\n".join(
        f"{i}. {text}" for i, text in enumerate(scene_descriptions, start=1)
    )
    rendered = _fill(templates.sum, scenes=block)
    if max_chars is not None and len(rendered) > max_chars:
        raise ContextLengthExceeded(
            f"chapter prompt is {len(rendered)} chars, budget {max_chars}"
        )
    return rendered


def render_synopsis_prompt(
    chapter_summaries: Sequence[str],
    templates: Optional[PromptTemplates] = None,
    max_chars: Optional[int] = None,
) -> str:
    """Render the final synthesis prompt over ordered chapter summaries."""
    if not chapter_summaries:
        raise PromptError("synopsis prompt needs at least one chapter summary")
    templates = templates or PromptTemplates.packaged()
    block = "\n\n".join(
        f"Chapter {i}: {text}" for i, text in enumerate(chapter_summaries, start=1)
    )
    rendered = _fill(templates.synopsis, chapters=block)
    if max_chars is not None and len(rendered) > max_chars:
        raise ContextLengthExceeded(
            f"synopsis prompt is {len(rendered)} chars, budget {max_chars}"
        )
    return rendered
