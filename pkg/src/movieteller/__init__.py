"""movieteller: identity-consistent movie synopsis pipeline.

Stages: scene segmentation, keyframe quality gating, face-identity
grounding, three-stage progressive abstraction, and an LLM-as-a-Judge
evaluation harness.
"""

from .errors import MovieTellerError
from .frames import Frame, FrameSource, LumaStats, luma_stats, open_source
from .segmentation import SceneBoundary, SegmentationConfig, content_score, segment_scenes
from .keyframes import GateConfig, Keyframe, passes_gate, select_keyframe
from .identity import (
    CastEntry,
    Grounding,
    IdentityDatabase,
    build_database,
    ground_keyframe,
    match_face,
)
from .prompting import GroundingMode, PromptTemplates
from .orchestrator import PipelineConfig, chunk_chapters, run_pipeline
from .evaluation import JudgeScore, PreferenceRecord, judge_synopsis, win_rates

__version__ = "0.1.0"

__all__ = [
    "MovieTellerError",
    "Frame",
    "FrameSource",
    "LumaStats",
    "luma_stats",
    "open_source",
    "SceneBoundary",
    "SegmentationConfig",
    "content_score",
    "segment_scenes",
    "GateConfig",
    "Keyframe",
    "passes_gate",
    "select_keyframe",
    "CastEntry",
    "Grounding",
    "IdentityDatabase",
    "build_database",
    "ground_keyframe",
    "match_face",
    "GroundingMode",
    "PromptTemplates",
    "PipelineConfig",
    "chunk_chapters",
    "run_pipeline",
    "JudgeScore",
    "PreferenceRecord",
    "judge_synopsis",
    "win_rates",
]
