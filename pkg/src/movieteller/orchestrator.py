"""Pipeline driver: segment -> gate -> ground -> describe -> chapters ->
summarize -> synthesize, with per-stage caching and resume.

Each stage hashes its inputs (upstream artifacts, config slice, prompt
template); a stage re-executes when its digest changes, when an output file
is missing, or when any upstream stage re-executed this run.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from PIL import Image

from .errors import (
    ConfigError,
    ContextLengthExceeded,
    GroundingError,
    LLMError,
    StageError,
)
from .facetool import DeterministicStubTool, FaceTool, HttpFaceTool
from .frames import FrameSource, open_source
from .identity import (
    Grounding,
    IdentityDatabase,
    build_database,
    annotate,
    ground_keyframe,
    groundings_from_json,
    groundings_to_json,
    load_cast,
)
from .keyframes import GateConfig, Keyframe, select_keyframe
from .llm import ChatClient, ChatRequest, HttpChatClient, MockChatClient, request_digest
from .persistence import (
    StageRecord,
    StageStore,
    RunManifest,
    digest_inputs,
    write_atomic,
    write_json_artifact,
)
from .prompting import (
    GroundingMode,
    PromptTemplates,
    render_chapter_prompt,
    render_description_prompt,
    render_synopsis_prompt,
)
from .segmentation import SceneBoundary, SegmentationConfig, boundaries_to_records, segment_scenes

log = logging.getLogger(__name__)

STAGE_ORDER = [
    "facedb", "segment", "keyframes", "ground",
    "describe", "chapters", "summarize", "synthesize",
]

MAX_ABSTRACTION_DEPTH = 3


@dataclass(frozen=True)
class Chapter:
    chapter_id: int
    scene_ids: Tuple[int, ...]


@dataclass
class PipelineConfig:
    video: str
    video_kind: str = "y4m"
    run_dir: str = "runs/movie"
    movie_id: str = "movie"
    title: str = ""
    cast_file: Optional[str] = None
    mode: GroundingMode = GroundingMode.FULL
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    tau_id: float = 0.40
    chapter_size: int = 20
    annotate_images: bool = True
    include_gate_failed: bool = False
    concurrency: int = 4
    max_input_chars: Optional[int] = None
    frame_rate: Optional[float] = None
    mock: bool = False
    transcript_dir: Optional[str] = None
    prompt_dir: Optional[str] = None
    face_tool_url: Optional[str] = None
    llm_endpoint: Optional[str] = None
    models: Dict[str, str] = field(
        default_factory=lambda: {
            "describer": "mock-vlm",
            "summarizer": "mock-llm",
            "judge": "mock-judge",
        }
    )

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            self.mode = GroundingMode.parse(self.mode)
        if self.video_kind not in ("y4m", "imagedir"):
            raise ConfigError(f"video_kind must be y4m or imagedir, got {self.video_kind!r}")
        if not (-1.0 <= self.tau_id <= 1.0):
            raise ConfigError(f"tau_id must be a cosine similarity in [-1, 1], got {self.tau_id}")
        if self.chapter_size < 1:
            raise ConfigError(f"chapter_size must be >= 1, got {self.chapter_size}")
        if self.concurrency < 1:
            raise ConfigError(f"concurrency must be >= 1, got {self.concurrency}")
        if not self.mock and not self.llm_endpoint:
            raise ConfigError("llm_endpoint required unless running with mock=true")

    def snapshot(self) -> Dict[str, Any]:
        """JSON-safe effective config for the manifest and stage digests."""
        data = asdict(self)
        data["mode"] = self.mode.value
        data["segmentation"] = {
            "threshold": self.segmentation.threshold,
            "min_scene_len": self.segmentation.min_scene_len,
            "weights": list(self.segmentation.weights),
        }
        data["gate"] = {
            "min_mean": self.gate.min_mean,
            "max_mean": self.gate.max_mean,
            "min_std": self.gate.min_std,
        }
        return data


def chunk_chapters(descriptions: Sequence[dict], chapter_size: int) -> List[Chapter]:
    """Group ordered scene descriptions into consecutive runs of chapter_size;
    the final chapter takes the remainder."""
    if not descriptions:
        raise StageError("chapters", "no scene descriptions to chunk")
    if chapter_size < 1:
        raise ConfigError(f"chapter_size must be >= 1, got {chapter_size}")
    chapters = []
    for start in range(0, len(descriptions), chapter_size):
        chunk = descriptions[start : start + chapter_size]
        chapters.append(
            Chapter(len(chapters), tuple(int(d["scene_id"]) for d in chunk))
        )
    return chapters


def _template_digest(body: str) -> str:
    return hashlib.sha256(body.encode()).hexdigest()


def _load_templates(config: PipelineConfig) -> PromptTemplates:
    if config.prompt_dir:
        return PromptTemplates.from_dir(Path(config.prompt_dir))
    return PromptTemplates.packaged()


def build_llm_client(config: PipelineConfig) -> ChatClient:
    if config.mock:
        return MockChatClient(
            transcript_dir=Path(config.transcript_dir) if config.transcript_dir else None,
            max_input_chars=config.max_input_chars,
            concurrency=config.concurrency,
        )
    return HttpChatClient(
        config.llm_endpoint,
        api_key=os.environ.get("MOVIETELLER_API_KEY", ""),
        concurrency=config.concurrency,
    )


def build_face_tool(config: PipelineConfig) -> FaceTool:
    if config.face_tool_url:
        return HttpFaceTool(config.face_tool_url)
    return DeterministicStubTool()


class PipelineRun:
    """State shared across the stages of one run."""

    def __init__(
        self,
        config: PipelineConfig,
        llm_client: Optional[ChatClient] = None,
        face_tool: Optional[FaceTool] = None,
    ) -> None:
        self.config = config
        self.client = llm_client or build_llm_client(config)
        self.face_tool = face_tool or build_face_tool(config)
        self.templates = _load_templates(config)
        self.store = StageStore(Path(config.run_dir), config.movie_id, config.snapshot())
        self._cascade = False  # set once any stage re-executes

    # -- stage plumbing ----------------------------------------------------

    def _run_stage(
        self,
        name: str,
        digest: str,
        execute: Callable[[], List[str]],
    ) -> StageRecord:
        cached = None if self._cascade else self.store.load_or_mark_stale(name, digest)
        if cached is not None:
            record = StageRecord(
                stage=name,
                input_digest=digest,
                outputs=cached.outputs,
                status="cached",
                created_at=cached.created_at,
                model_calls=0,
            )
            self.store.manifest.set_record(record)
            self.store.save_manifest()
            return record
        self._cascade = True
        calls_before = self.client.call_count
        start = time.monotonic()
        try:
            outputs = execute()
        except (StageError, LLMError, GroundingError, OSError) as exc:
            self.store.manifest.set_record(
                StageRecord(stage=name, input_digest=digest, outputs=[], status="failed")
            )
            self.store.save_manifest()
            if isinstance(exc, StageError):
                raise
            raise StageError(name, str(exc))
        record = StageRecord(
            stage=name,
            input_digest=digest,
            outputs=outputs,
            status="executed",
            model_calls=self.client.call_count - calls_before,
            duration_s=time.monotonic() - start,
        )
        self.store.manifest.set_record(record)
        self.store.save_manifest()
        return record

    def _artifact(self, *parts: str) -> Path:
        return self.store.path(*parts)

    def _read_json(self, name: str):
        return json.loads(self._artifact(name).read_text())

    # -- stages ------------------------------------------------------------

    def stage_facedb(self) -> None:
        cfg = self.config
        if not cfg.cast_file:
            return
        cast_path = Path(cfg.cast_file)
        ref_files = []
        for entry in load_cast(cast_path):
            ref_files.extend(Path(p) for p in entry.reference_images)
        digest = digest_inputs(
            "facedb",
            files=[cast_path, *ref_files],
            config={"dimension": self.face_tool.dimension},
        )

        def execute() -> List[str]:
            db = build_database(load_cast(cast_path), self.face_tool)
            write_atomic(
                self._artifact("facedb.json"),
                json.dumps(db.to_json(), indent=2, sort_keys=True).encode(),
            )
            return ["facedb.json"]

        self._run_stage("facedb", digest, execute)

    def stage_segment(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "segment",
            files=[Path(cfg.video)],
            config={
                "kind": cfg.video_kind,
                "frame_rate": cfg.frame_rate,
                **self.config.snapshot()["segmentation"],
            },
        )

        def execute() -> List[str]:
            source = self._open_video()
            bounds = segment_scenes(source, cfg.segmentation)
            write_json_artifact(
                self._artifact("scenes.json"),
                boundaries_to_records(bounds, source.frame_rate),
            )
            return ["scenes.json"]

        self._run_stage("segment", digest, execute)

    def _open_video(self) -> FrameSource:
        return open_source(self.config.video, self.config.video_kind, self.config.frame_rate)

    def stage_keyframes(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "keyframes",
            files=[self._artifact("scenes.json"), Path(cfg.video)],
            config=self.config.snapshot()["gate"],
        )

        def execute() -> List[str]:
            source = self._open_video()
            outputs = ["keyframes.json"]
            records = []
            for scene in self._read_json("scenes.json"):
                boundary = SceneBoundary(
                    scene["scene_id"], scene["start_frame"], scene["end_frame"]
                )
                keyframe, frame = select_keyframe(boundary, source.get_frame, cfg.gate)
                rel = f"keyframes/scene_{boundary.scene_id:05d}.png"
                path = self._artifact(rel)
                path.parent.mkdir(parents=True, exist_ok=True)
                buf = io.BytesIO()
                Image.fromarray(frame.pixels).save(buf, format="PNG")
                write_atomic(path, buf.getvalue())
                outputs.append(rel)
                records.append(
                    {
                        "scene_id": keyframe.scene_id,
                        "frame_index": keyframe.frame_index,
                        "image_path": rel,
                        "stats": {"mean": keyframe.stats.mean, "std": keyframe.stats.std},
                        "gate_passed": keyframe.gate_passed,
                    }
                )
            write_json_artifact(self._artifact("keyframes.json"), records)
            return outputs

        self._run_stage("keyframes", digest, execute)

    def _keyframe_image_files(self) -> List[Path]:
        return [self._artifact(k["image_path"]) for k in self._read_json("keyframes.json")]

    def stage_ground(self) -> None:
        cfg = self.config
        facedb_path = self._artifact("facedb.json")
        input_files = [self._artifact("keyframes.json"), *self._keyframe_image_files()]
        if facedb_path.is_file():
            input_files.append(facedb_path)
        digest = digest_inputs(
            "ground",
            files=input_files,
            config={"tau_id": cfg.tau_id, "mode": cfg.mode.value},
        )

        def execute() -> List[str]:
            keyframes = self._read_json("keyframes.json")
            grounded: Dict[str, list] = {}
            db = (
                IdentityDatabase.load(facedb_path)
                if facedb_path.is_file()
                else IdentityDatabase(dimension=self.face_tool.dimension)
            )
            use_tool = cfg.mode is not GroundingMode.NO_HINT and db.entries
            for kf in keyframes:
                if use_tool and (kf["gate_passed"] or cfg.include_gate_failed):
                    image_bytes = self._artifact(kf["image_path"]).read_bytes()
                    with Image.open(io.BytesIO(image_bytes)) as img:
                        size = img.size
                    faces = self.face_tool.detect(image_bytes)
                    groundings = ground_keyframe(faces, db, cfg.tau_id, image_size=size)
                else:
                    groundings = []
                grounded[str(kf["scene_id"])] = groundings_to_json(groundings)
            write_json_artifact(self._artifact("groundings.json"), grounded)
            return ["groundings.json"]

        self._run_stage("ground", digest, execute)

    def _describable_keyframes(self) -> List[dict]:
        keyframes = self._read_json("keyframes.json")
        return [k for k in keyframes if k["gate_passed"] or self.config.include_gate_failed]

    def stage_describe(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "describe",
            files=[
                self._artifact("keyframes.json"),
                self._artifact("groundings.json"),
                *self._keyframe_image_files(),
            ],
            config={
                "mode": cfg.mode.value,
                "model": cfg.models["describer"],
                "annotate": cfg.annotate_images,
                "include_gate_failed": cfg.include_gate_failed,
            },
            extra=[_template_digest(self.templates.desp)],
        )

        def execute() -> List[str]:
            keyframes = self._describable_keyframes()
            if not keyframes:
                raise StageError("describe", "no describable scenes")
            grounded = self._read_json("groundings.json")
            outputs = ["scene_descriptions.json"]

            jobs = []
            for kf in keyframes:
                groundings = groundings_from_json(grounded.get(str(kf["scene_id"]), []))
                prompt = render_description_prompt(groundings, cfg.mode, self.templates)
                image_bytes = self._artifact(kf["image_path"]).read_bytes()
                if cfg.mode is GroundingMode.FULL and cfg.annotate_images and groundings:
                    with Image.open(io.BytesIO(image_bytes)) as img:
                        annotated = annotate(img, groundings)
                    rel = f"annotated/scene_{kf['scene_id']:05d}.png"
                    buf = io.BytesIO()
                    annotated.save(buf, format="PNG")
                    write_atomic(self._artifact(rel), buf.getvalue())
                    outputs.append(rel)
                    image_bytes = buf.getvalue()
                request = ChatRequest(
                    model=cfg.models["describer"], user_text=prompt, image=image_bytes
                )
                jobs.append((kf["scene_id"], request))

            replies = self._parallel_chat("describe", jobs)
            records = [
                {
                    "scene_id": scene_id,
                    "text": replies[scene_id],
                    "grounding_mode": cfg.mode.value,
                    "model": cfg.models["describer"],
                    "prompt_digest": request_digest(request),
                }
                for scene_id, request in jobs
            ]
            write_json_artifact(self._artifact("scene_descriptions.json"), records)
            return outputs

        self._run_stage("describe", digest, execute)

    def _parallel_chat(
        self, stage: str, jobs: Sequence[Tuple[int, ChatRequest]]
    ) -> Dict[int, str]:
        """Issue requests concurrently, assemble by item id; completed replies
        are persisted so a failed stage resumes without re-asking."""
        partial_path = self._artifact(f".{stage}.partial.json")
        partial: Dict[str, str] = {}
        if partial_path.is_file():
            try:
                partial = json.loads(partial_path.read_text())
            except ValueError:
                partial = {}

        results: Dict[int, str] = {}
        errors: List[Tuple[int, Exception]] = []

        def worker(item: Tuple[int, ChatRequest]) -> None:
            item_id, request = item
            digest = request_digest(request)
            if digest in partial:
                results[item_id] = partial[digest]
                return
            try:
                reply = self.client.chat(request).text
            except ContextLengthExceeded:
                raise
            except LLMError as exc:
                errors.append((item_id, exc))
                return
            results[item_id] = reply
            partial[digest] = reply

        with ThreadPoolExecutor(max_workers=self.client.concurrency) as pool:
            list(pool.map(worker, jobs))

        if errors:
            write_atomic(partial_path, json.dumps(partial, sort_keys=True).encode())
            item_id, exc = sorted(errors, key=lambda e: e[0])[0]
            raise StageError(stage, f"item {item_id} failed permanently: {exc}")
        if partial_path.exists():
            partial_path.unlink()
        return results

    def stage_chapters(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "chapters",
            files=[self._artifact("scene_descriptions.json")],
            config={"chapter_size": cfg.chapter_size},
        )

        def execute() -> List[str]:
            descriptions = self._read_json("scene_descriptions.json")
            chapters = chunk_chapters(descriptions, cfg.chapter_size)
            write_json_artifact(
                self._artifact("chapters.json"),
                [
                    {"chapter_id": c.chapter_id, "scene_ids": list(c.scene_ids)}
                    for c in chapters
                ],
            )
            return ["chapters.json"]

        self._run_stage("chapters", digest, execute)

    def _summarize_texts(self, texts: List[str], depth: int = 0) -> str:
        """Summarize one chapter's scene texts, splitting in half on context
        overflow and merging the halves with one further call."""
        cfg = self.config
        try:
            prompt = render_chapter_prompt(texts, self.templates, cfg.max_input_chars)
            return self.client.chat(
                ChatRequest(model=cfg.models["summarizer"], user_text=prompt)
            ).text
        except ContextLengthExceeded:
            if depth >= MAX_ABSTRACTION_DEPTH or len(texts) < 2:
                raise
            mid = len(texts) // 2
            halves = [
                self._summarize_texts(texts[:mid], depth + 1),
                self._summarize_texts(texts[mid:], depth + 1),
            ]
            prompt = render_chapter_prompt(halves, self.templates, cfg.max_input_chars)
            return self.client.chat(
                ChatRequest(model=cfg.models["summarizer"], user_text=prompt)
            ).text

    def stage_summarize(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "summarize",
            files=[
                self._artifact("chapters.json"),
                self._artifact("scene_descriptions.json"),
            ],
            config={
                "model": cfg.models["summarizer"],
                "max_input_chars": cfg.max_input_chars,
            },
            extra=[_template_digest(self.templates.sum)],
        )

        def execute() -> List[str]:
            descriptions = {
                d["scene_id"]: d["text"]
                for d in self._read_json("scene_descriptions.json")
            }
            chapters = self._read_json("chapters.json")
            results: Dict[int, str] = {}
            errors: List[Tuple[int, Exception]] = []

            def worker(chapter: dict) -> None:
                texts = [descriptions[sid] for sid in chapter["scene_ids"]]
                try:
                    results[chapter["chapter_id"]] = self._summarize_texts(texts)
                except LLMError as exc:
                    errors.append((chapter["chapter_id"], exc))

            with ThreadPoolExecutor(max_workers=self.client.concurrency) as pool:
                list(pool.map(worker, chapters))
            if errors:
                cid, exc = sorted(errors, key=lambda e: e[0])[0]
                raise StageError("summarize", f"chapter {cid} failed: {exc}")

            write_json_artifact(
                self._artifact("chapter_summaries.json"),
                [
                    {"chapter_id": cid, "text": results[cid]}
                    for cid in sorted(results)
                ],
            )
            return ["chapter_summaries.json"]

        self._run_stage("summarize", digest, execute)

    def stage_synthesize(self) -> None:
        cfg = self.config
        digest = digest_inputs(
            "synthesize",
            files=[self._artifact("chapter_summaries.json")],
            config={
                "model": cfg.models["summarizer"],
                "max_input_chars": cfg.max_input_chars,
            },
            extra=[
                _template_digest(self.templates.synopsis),
                _template_digest(self.templates.sum),
            ],
        )

        def execute() -> List[str]:
            summaries = self._read_json("chapter_summaries.json")
            texts = [s["text"] for s in summaries]
            extra_rounds = 0
            while True:
                try:
                    prompt = render_synopsis_prompt(texts, self.templates, cfg.max_input_chars)
                    reply = self.client.chat(
                        ChatRequest(model=cfg.models["summarizer"], user_text=prompt)
                    )
                    break
                except ContextLengthExceeded:
                    if extra_rounds >= MAX_ABSTRACTION_DEPTH:
                        raise StageError(
                            "synthesize",
                            f"context budget still exceeded after {extra_rounds} "
                            "extra abstraction rounds",
                        )
                    extra_rounds += 1
                    texts = [
                        self._summarize_texts(texts[i : i + 2])
                        for i in range(0, len(texts), 2)
                    ]
            write_atomic(self._artifact("synopsis.txt"), reply.text.encode())
            write_json_artifact(
                self._artifact("synopsis.json"),
                {
                    "chapter_ids": [s["chapter_id"] for s in summaries],
                    "model": cfg.models["summarizer"],
                    "prompt_digest": request_digest(
                        ChatRequest(model=cfg.models["summarizer"], user_text=prompt)
                    ),
                    "extra_abstraction_rounds": extra_rounds,
                },
            )
            return ["synopsis.txt", "synopsis.json"]

        self._run_stage("synthesize", digest, execute)

    def run(self) -> RunManifest:
        self.stage_facedb()
        self.stage_segment()
        self.stage_keyframes()
        self.stage_ground()
        self.stage_describe()
        self.stage_chapters()
        self.stage_summarize()
        self.stage_synthesize()
        return self.store.manifest


def run_pipeline(
    config: PipelineConfig,
    llm_client: Optional[ChatClient] = None,
    face_tool: Optional[FaceTool] = None,
) -> RunManifest:
    """Execute all stages (cached stages are skipped) and return the manifest."""
    return PipelineRun(config, llm_client, face_tool).run()
