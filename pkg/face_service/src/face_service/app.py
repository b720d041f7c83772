"""HTTP surface: POST /detect and GET /health.

Images travel as base64 inside a JSON body; responses are deterministic for
identical input bytes. The model loads at application construction, so a
broken installation prevents the process from serving at all.
"""

from __future__ import annotations

import base64
import binascii
import os

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .model import DEFAULT_MIN_FACE_SIZE, FaceModel

DEFAULT_MAX_IMAGE_BYTES = 8 * 1024 * 1024


class DetectRequest(BaseModel):
    image: str


def create_app(model: FaceModel = None, max_image_bytes: int = None) -> FastAPI:
    if model is None:
        model = FaceModel()
    if max_image_bytes is None:
        max_image_bytes = int(
            os.environ.get("FACE_SERVICE_MAX_IMAGE_BYTES", DEFAULT_MAX_IMAGE_BYTES)
        )
    app = FastAPI(title="face-service")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model_id": model.model_id, "dimension": model.dimension}

    @app.post("/detect")
    def detect(
        request: DetectRequest,
        min_face_size: int = Query(default=DEFAULT_MIN_FACE_SIZE, ge=1),
    ) -> dict:
        # 4/3 base64 expansion: reject oversize payloads before decoding.
        if len(request.image) > (max_image_bytes * 4) // 3 + 4:
            raise HTTPException(status_code=413, detail="image too large")
        try:
            image_bytes = base64.b64decode(request.image, validate=True)
        except (binascii.Error, ValueError):
            raise HTTPException(status_code=400, detail="invalid base64 payload")
        if len(image_bytes) > max_image_bytes:
            raise HTTPException(status_code=413, detail="image too large")
        try:
            faces = model.analyze(image_bytes, min_face_size=min_face_size)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"faces": faces}

    return app


def serve() -> None:
    import uvicorn

    host = os.environ.get("FACE_SERVICE_HOST", "127.0.0.1")
    port = int(os.environ.get("FACE_SERVICE_PORT", "8301"))
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    serve()
