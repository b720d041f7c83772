"""Content-addressed stage store: canonical JSON artifacts, input digests,
and the run manifest that makes the pipeline resumable."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .errors import MovieTellerError


def _canonicalize(obj: Any) -> Any:
    """Round floats to 6 decimals so serialized artifacts hash identically
    across platforms; containers are handled recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.6f}")
    if isinstance(obj, dict):
        return {str(k): _canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonicalize(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    """Deterministic serialization: sorted keys, fixed float formatting."""
    return json.dumps(_canonicalize(obj), sort_keys=True, separators=(",", ": "), indent=1)


def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_artifact(path: Path, obj: Any) -> None:
    write_atomic(path, canonical_json(obj).encode("utf-8"))


def digest_inputs(
    stage: str,
    files: Sequence[Path] = (),
    config: Optional[Dict[str, Any]] = None,
    extra: Sequence[str] = (),
) -> str:
    """256-bit hex digest over the stage name, input file bytes, canonicalized
    config, and any extra strings (e.g. template digests)."""
    h = hashlib.sha256()
    h.update(stage.encode())
    for path in files:
        path = Path(path)
        h.update(b"\x00F")
        h.update(path.name.encode())
        try:
            with open(path, "rb") as fh:
                for chunk in iter(lambda: fh.read(1 << 20), b""):
                    h.update(chunk)
        except OSError as exc:
            raise MovieTellerError(f"unreadable stage input {path}: {exc}")
    if config is not None:
        h.update(b"\x00C")
        h.update(canonical_json(config).encode())
    for item in extra:
        h.update(b"\x00X")
        h.update(item.encode())
    return h.hexdigest()


@dataclass
class StageRecord:
    stage: str
    input_digest: str
    outputs: List[str]
    status: str = "executed"  # cached | executed | failed
    created_at: float = field(default_factory=time.time)
    model_calls: int = 0
    duration_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "input_digest": self.input_digest,
            "outputs": list(self.outputs),
            "status": self.status,
            "created_at": self.created_at,
            "model_calls": self.model_calls,
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_json(cls, data: dict) -> "StageRecord":
        return cls(
            stage=data["stage"],
            input_digest=data["input_digest"],
            outputs=list(data["outputs"]),
            status=data.get("status", "executed"),
            created_at=float(data.get("created_at", 0.0)),
            model_calls=int(data.get("model_calls", 0)),
            duration_s=float(data.get("duration_s", 0.0)),
        )


@dataclass
class RunManifest:
    run_id: str
    config: Dict[str, Any]
    stages: List[StageRecord] = field(default_factory=list)

    def record_for(self, stage: str) -> Optional[StageRecord]:
        for record in self.stages:
            if record.stage == stage:
                return record
        return None

    def set_record(self, record: StageRecord) -> None:
        for i, existing in enumerate(self.stages):
            if existing.stage == record.stage:
                self.stages[i] = record
                return
        self.stages.append(record)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "stages": [r.to_json() for r in self.stages],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        return cls(
            run_id=data["run_id"],
            config=dict(data.get("config", {})),
            stages=[StageRecord.from_json(r) for r in data.get("stages", [])],
        )


class StageStore:
    """One directory per run; stage records live in manifest.json."""

    def __init__(self, run_dir: Path, run_id: str, config: Dict[str, Any]) -> None:
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = self._load_manifest(run_id, config)

    def _load_manifest(self, run_id: str, config: Dict[str, Any]) -> RunManifest:
        path = self.run_dir / "manifest.json"
        if path.is_file():
            try:
                manifest = RunManifest.from_json(json.loads(path.read_text()))
                manifest.config = config
                return manifest
            except (ValueError, KeyError):
                pass  # corrupt manifest: start fresh, all stages stale
        return RunManifest(run_id=run_id, config=config)

    def path(self, *parts: str) -> Path:
        return self.run_dir.joinpath(*parts)

    def save_manifest(self) -> None:
        write_atomic(
            self.run_dir / "manifest.json",
            canonical_json(self.manifest.to_json()).encode(),
        )

    def load_or_mark_stale(self, stage: str, digest: str) -> Optional[StageRecord]:
        """Return the cached record iff its digest matches and every declared
        output file still exists; anything else is stale."""
        record = self.manifest.record_for(stage)
        if record is None or record.status == "failed":
            return None
        if record.input_digest != digest:
            return None
        for output in record.outputs:
            if not self.path(output).exists():
                return None
        return record
