"""Read-only HTTP service exposing search and corpus browsing.

Endpoints (JSON unless noted):
    GET  /health                      service and artifact status
    GET  /topics                      evaluation topics, if configured
    POST /search                      SearchRequest -> SearchResponse
    GET  /frames/{id}/thumbnail       image bytes (PNG, lazily cached)
    GET  /frames/{id}/context?n=4     neighboring frames with captions

The service never mutates stores; all state is loaded once at startup and
shared by concurrent requests.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .captioning import Caption
from .config import PipelineConfig
from .corpus import Frame
from .evaluation import load_topics
from .pipeline import Artifacts, ArtifactError

logger = logging.getLogger(__name__)

THUMBNAIL_SIZE = 256


class SearchRequest(BaseModel):
    query: str = Field(min_length=1)
    method: Literal["single", "collective", "fine", "coarse", "combination", "rerank"] = "single"
    k: int = Field(default=10, ge=1, le=1000)


class RankedFrame(BaseModel):
    frameId: str
    score: float
    timestamp: str
    thumbnailUrl: str
    captions: list[str]


class SearchResponse(BaseModel):
    rankedFrames: list[RankedFrame]
    timingMs: float


def _thumbnail_path(config: PipelineConfig, frame: Frame) -> Path:
    """Lazily render and cache a thumbnail for one frame."""
    cache_dir = Path(config.paths.thumbnails_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    safe_name = "".join(c if c.isalnum() or c in "-_." else "_" for c in frame.id)
    cached = cache_dir / f"{safe_name}.png"
    if cached.is_file():
        return cached
    source = Path(config.paths.manifest).parent / frame.image_path
    if not source.is_file():
        raise HTTPException(status_code=404, detail=f"image for frame {frame.id!r} not found")
    try:
        from PIL import Image

        with Image.open(source) as img:
            img.thumbnail((THUMBNAIL_SIZE, THUMBNAIL_SIZE))
            img.save(cached, format="PNG")
    except Exception as exc:
        raise HTTPException(
            status_code=404, detail=f"thumbnail unavailable for frame {frame.id!r}: {exc}"
        ) from exc
    return cached


def create_app(config: PipelineConfig) -> FastAPI:
    app = FastAPI(title="lifelogsearch", version="0.1.0")
    # read-only service, no credentials: safe to open to a static UI origin
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    state: dict = {"artifacts": None, "error": None}
    try:
        state["artifacts"] = Artifacts.load(config)
    except Exception as exc:
        state["error"] = str(exc)
        logger.warning("artifacts not loaded; search will return 503: %s", exc)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def artifacts() -> Artifacts:
        if state["artifacts"] is None:
            raise HTTPException(status_code=503, detail=f"index not loaded: {state['error']}")
        return state["artifacts"]

    def frame_or_404(frame_id: str) -> Frame:
        frame = artifacts().corpus.frames.get(frame_id)
        if frame is None:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")
        return frame

    def caption_payload(caption: Caption) -> dict:
        return {"granularity": caption.granularity.value, "text": caption.text}

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "loaded": state["artifacts"] is not None,
            "methods": state["artifacts"].available_methods() if state["artifacts"] else [],
        }

    @app.get("/topics")
    def topics():
        path = Path(config.paths.topics)
        if not path.is_file():
            return []
        return [
            {"id": t.topic_id, "title": t.title, "description": t.description}
            for t in load_topics(path)
        ]

    @app.post("/search", response_model=SearchResponse)
    def search(request: SearchRequest) -> SearchResponse:
        art = artifacts()
        started = time.perf_counter()
        try:
            run = art.run_query(request.query, request.method, k=request.k)
        except ArtifactError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        except ValueError as exc:  # unembeddable query text and the like
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        ranked = []
        for sf in run.ranked_frames:
            frame = art.corpus.frames[sf.frame_id]
            caption_texts = [
                art.captions_by_id[cid].text for cid in sf.provenance if cid in art.captions_by_id
            ]
            ranked.append(
                RankedFrame(
                    frameId=sf.frame_id,
                    score=sf.score,
                    timestamp=frame.timestamp.isoformat(),
                    thumbnailUrl=f"/frames/{sf.frame_id}/thumbnail",
                    captions=caption_texts,
                )
            )
        return SearchResponse(rankedFrames=ranked, timingMs=elapsed_ms)

    @app.get("/frames/{frame_id}/thumbnail")
    def thumbnail(frame_id: str):
        frame = frame_or_404(frame_id)
        return FileResponse(_thumbnail_path(config, frame), media_type="image/png")

    @app.get("/frames/{frame_id}/context")
    def context(frame_id: str, n: int = 4):
        if n < 0 or n > 100:
            raise HTTPException(status_code=400, detail="n must be in [0, 100]")
        art = artifacts()
        center = frame_or_404(frame_id)
        segment_frames = art.corpus.segment_frames(center.segment)
        position = center.index_in_segment
        lo = max(0, position - n)
        neighbors = segment_frames[lo : position + n + 1]
        return {
            "center": frame_id,
            "frames": [
                {
                    "frameId": frame.id,
                    "timestamp": frame.timestamp.isoformat(),
                    "thumbnailUrl": f"/frames/{frame.id}/thumbnail",
                    "isCenter": frame.id == frame_id,
                    "captions": [
                        caption_payload(c) for c in art.captions_by_frame.get(frame.id, [])
                    ],
                }
                for frame in neighbors
            ],
        }

    return app
