"""Command-line surface: one subcommand per pipeline stage plus `run`,
`judge`, and `report`.

Settings come from a JSON config file (default movieteller.json); every
value can be overridden by a same-named flag. Exit codes: 0 success,
1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click

from . import evaluation
from .errors import ConfigError, MovieTellerError
from .orchestrator import PipelineConfig, PipelineRun, build_llm_client
from .prompting import GroundingMode
from .segmentation import SegmentationConfig
from .keyframes import GateConfig


def _load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        default = Path("movieteller.json")
        if not default.is_file():
            return {}
        path = str(default)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _build_config(file_values: Dict[str, Any], overrides: Dict[str, Any]) -> PipelineConfig:
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    seg_keys = {"threshold", "min_scene_len", "weights"}
    gate_keys = {"min_mean", "max_mean", "min_std"}
    seg_kwargs = {k: merged.pop(k) for k in list(merged) if k in seg_keys}
    gate_kwargs = {k: merged.pop(k) for k in list(merged) if k in gate_keys}
    if "weights" in seg_kwargs:
        seg_kwargs["weights"] = tuple(seg_kwargs["weights"])
    if "video" not in merged:
        raise ConfigError("no video source configured (set 'video' or pass --video)")
    try:
        return PipelineConfig(
            segmentation=SegmentationConfig(**seg_kwargs),
            gate=GateConfig(**gate_kwargs),
            **merged,
        )
    except TypeError as exc:
        raise ConfigError(f"invalid configuration: {exc}")


def pipeline_options(fn):
    @click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
    @click.option("--video", type=str, default=None)
    @click.option("--video-kind", type=click.Choice(["y4m", "imagedir"]), default=None)
    @click.option("--cast", "cast_file", type=str, default=None)
    @click.option("--mode", type=click.Choice(["no-hint", "name-only", "full"]), default=None)
    @click.option("--threshold", type=float, default=None, help="Scene cut threshold.")
    @click.option("--min-scene-len", type=int, default=None)
    @click.option("--min-mean", type=float, default=None, help="Keyframe gate luma floor.")
    @click.option("--max-mean", type=float, default=None, help="Keyframe gate luma ceiling.")
    @click.option("--min-std", type=float, default=None, help="Keyframe gate std floor.")
    @click.option("--tau-id", type=float, default=None, help="Identity match threshold.")
    @click.option("--chapter-size", type=int, default=None)
    @click.option("--concurrency", type=int, default=None)
    @click.option("--max-input-chars", type=int, default=None)
    @click.option("--run-dir", type=str, default=None)
    @click.option("--movie-id", type=str, default=None)
    @click.option("--title", type=str, default=None)
    @click.option("--prompt-dir", type=str, default=None)
    @click.option("--mock/--no-mock", "mock", default=None)
    @click.option("--transcript-dir", type=str, default=None)
    @click.option("--llm-endpoint", type=str, default=None)
    @click.option("--face-tool-url", type=str, default=None)
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _make_run(config_path: Optional[str], **overrides) -> PipelineRun:
    if overrides.get("mode"):
        overrides["mode"] = GroundingMode.parse(overrides["mode"])
    file_values = _load_config_file(config_path)
    return PipelineRun(_build_config(file_values, overrides))


def _fail(exc: MovieTellerError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, ConfigError) else 1)


@click.group()
def main() -> None:
    """Identity-consistent movie synopsis pipeline."""


def _stage_command(name: str, stage_attrs: list):
    @main.command(name=name)
    @pipeline_options
    def command(config_path, **overrides):
        try:
            run = _make_run(config_path, **overrides)
            for attr in stage_attrs:
                getattr(run, attr)()
        except MovieTellerError as exc:
            _fail(exc)
        click.echo(f"{name}: ok")

    command.__doc__ = f"Execute the {name} stage (cached upstream inputs)."
    return command


_stage_command("segment", ["stage_segment"])
_stage_command("keyframes", ["stage_keyframes"])
_stage_command("ground", ["stage_ground"])
_stage_command("describe", ["stage_describe"])
_stage_command("summarize", ["stage_chapters", "stage_summarize"])
_stage_command("synthesize", ["stage_synthesize"])


@main.group()
def facedb() -> None:
    """Face database operations."""


@facedb.command("build")
@pipeline_options
def facedb_build(config_path, **overrides):
    """Build facedb.json from cast metadata via the face tool."""
    try:
        run = _make_run(config_path, **overrides)
        if not run.config.cast_file:
            raise ConfigError("facedb build requires a cast file")
        run.stage_facedb()
    except MovieTellerError as exc:
        _fail(exc)
    click.echo("facedb build: ok")


@main.command()
@pipeline_options
def run(config_path, **overrides):
    """Execute all pipeline stages."""
    try:
        pipeline = _make_run(config_path, **overrides)
        manifest = pipeline.run()
    except MovieTellerError as exc:
        _fail(exc)
    for record in manifest.stages:
        click.echo(f"{record.stage}: {record.status} (model calls: {record.model_calls})")
    click.echo(f"synopsis: {Path(pipeline.config.run_dir) / 'synopsis.txt'}")


@main.command()
@pipeline_options
@click.option("--method", type=click.Choice(["no_hint", "name_only", "full"]), required=True)
def judge(config_path, method, **overrides):
    """Score the run's synopsis with the LLM judge."""
    try:
        pipeline = _make_run(config_path, **overrides)
        run_dir = Path(pipeline.config.run_dir)
        synopsis_path = run_dir / "synopsis.txt"
        if not synopsis_path.is_file():
            raise MovieTellerError(f"no synopsis at {synopsis_path}; run the pipeline first")
        client = build_llm_client(pipeline.config)
        score = evaluation.judge_synopsis(
            pipeline.config.title or pipeline.config.movie_id,
            synopsis_path.read_text(),
            client,
            model=pipeline.config.models["judge"],
        )
        out = run_dir / f"judgement_{method}.json"
        out.write_text(json.dumps(score.to_json(), indent=2, sort_keys=True))
    except MovieTellerError as exc:
        _fail(exc)
    click.echo(f"judge: final {score.final:.2f} -> {out}")


@main.command()
@click.option("--runs-root", type=str, default="runs", help="Directory holding per-movie runs.")
@click.option("--preferences", "preferences_path", type=str, default=None)
@click.option("--bertscore", "bertscore_path", type=str, default=None)
@click.option("--out", "out_path", type=str, default=None, help="Write the text report here.")
def report(runs_root, preferences_path, bertscore_path, out_path):
    """Render evaluation tables from stored judgements and preferences."""
    try:
        judgements: Dict[str, list] = {}
        root = Path(runs_root)
        for path in sorted(root.glob("*/judgement_*.json")) if root.is_dir() else []:
            method = path.stem.replace("judgement_", "")
            data = json.loads(path.read_text())
            data.pop("final", None)
            judgements.setdefault(method, []).append(evaluation.JudgeScore(**data))
        preferences = (
            evaluation.load_preferences(Path(preferences_path)) if preferences_path else None
        )
        bertscore = (
            evaluation.load_bertscore(Path(bertscore_path)) if bertscore_path else None
        )
        text = evaluation.render_report(judgements, preferences, bertscore)
    except (MovieTellerError, OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(text)
    if out_path:
        Path(out_path).write_text(text)
        Path(out_path).with_suffix(".csv").write_text(evaluation.report_csv(judgements))


if __name__ == "__main__":
    main()
