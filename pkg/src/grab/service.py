"""HTTP facade: search -> rerank -> temporal search, plus annotations and
an optional remote embedding provider for text queries.

The corpus snapshot is immutable; annotations are the only mutable state
and go through a durable JSONL append log.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import httpx
import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .errors import CapabilityError, GrabError, InputError, NotFoundError, ProviderError
from .index import build_index, load_index
from .rerank import RerankParams, rerank
from .store import EmbeddingStore, load_corpus, normalize_rows
from .temporal import PivotRef, TemporalSearchParams, split_query, temporal_search

DEFAULT_TOP_M = 100


@dataclass
class ServiceConfig:
    manifest_path: Optional[str] = None
    index_mode: str = "exact"
    index_path: Optional[str] = None
    provider_url: Optional[str] = None
    annotation_log: str = "annotations.jsonl"
    top_m: int = DEFAULT_TOP_M

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        return cls(
            manifest_path=os.environ.get("GRAB_MANIFEST"),
            index_mode=os.environ.get("GRAB_INDEX_MODE", "exact"),
            index_path=os.environ.get("GRAB_INDEX_FILE"),
            provider_url=os.environ.get("GRAB_EMBED_PROVIDER_URL"),
            annotation_log=os.environ.get("GRAB_ANNOTATION_LOG", "annotations.jsonl"),
        )


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


class SearchRequest(BaseModel):
    query_text: Optional[str] = None
    query_embedding: Optional[List[float]] = None
    top_k: int = Field(default=20, ge=1, le=500)
    rerank: bool = True
    refine_k: int = 10
    expand_m: int = 5


class TemporalRequest(BaseModel):
    video_id: str
    pivot_frame: int
    query_start_text: Optional[str] = None
    query_end_text: Optional[str] = None
    query_start_embedding: Optional[List[float]] = None
    query_end_embedding: Optional[List[float]] = None
    windows_s: Optional[List[float]] = None
    lambda_s: Optional[float] = None
    lambda_t: Optional[float] = None


class AnnotationRequest(BaseModel):
    session_id: str
    query_text: str
    video_id: str
    f_s: int
    f_e: int
    answer_text: Optional[str] = None


class EmbeddingProvider:
    """HTTP client for the text-embedding sidecar, with a per-text cache."""

    def __init__(self, url: str, dim: int, timeout: float = 10.0):
        self.url = url
        self.dim = dim
        self.timeout = timeout
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        try:
            resp = httpx.post(self.url, json={"text": text}, timeout=self.timeout)
            resp.raise_for_status()
            vec = np.asarray(resp.json()["embedding"], dtype=np.float32)
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ProviderError(f"embedding provider unavailable: {exc}") from exc
        if vec.ndim != 1 or vec.shape[0] != self.dim:
            raise ProviderError(
                f"provider returned dimension {vec.shape}, corpus dimension is {self.dim}",
                bad_dimension=True,
            )
        vec = normalize_rows(vec[None, :], context="provider embedding")[0]
        with self._lock:
            self._cache[key] = vec
        return vec


class AnnotationLog:
    """Durable JSONL append log; writes are serialized and fsynced."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> dict:
        record = dict(record)
        record["id"] = str(uuid.uuid4())
        record["created_at"] = time.time()
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
        return record

    def query(self, session_id: Optional[str] = None) -> List[dict]:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if session_id is None or rec.get("session_id") == session_id:
                records.append(rec)
        return records


@dataclass
class ServiceState:
    config: ServiceConfig
    store: EmbeddingStore
    index: object
    annotations: AnnotationLog
    provider: Optional[EmbeddingProvider] = None
    provider_calls: int = 0


def _load_state(config: ServiceConfig) -> ServiceState:
    if not config.manifest_path:
        raise GrabError("no corpus manifest configured (GRAB_MANIFEST)")
    store = load_corpus(config.manifest_path)
    if config.index_path and Path(config.index_path).exists():
        index = load_index(Path(config.index_path))
    else:
        index = build_index(store, config.index_mode)
    provider = (
        EmbeddingProvider(config.provider_url, store.dim) if config.provider_url else None
    )
    return ServiceState(
        config=config,
        store=store,
        index=index,
        annotations=AnnotationLog(Path(config.annotation_log)),
        provider=provider,
    )


def create_app(config: Optional[ServiceConfig] = None, state: Optional[ServiceState] = None) -> FastAPI:
    if state is None:
        state = _load_state(config or ServiceConfig.from_env())
    app = FastAPI(title="grab", version="0.1.0")
    app.state.engine = state

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def resolve_embedding(text: Optional[str], inline: Optional[List[float]]) -> np.ndarray:
        if (text is None) == (inline is None):
            raise ApiError(400, "bad_request", "exactly one of query text / embedding required")
        if inline is not None:
            vec = np.asarray(inline, dtype=np.float32)
            if vec.shape[0] != state.store.dim:
                raise ApiError(
                    422, "dimension_mismatch",
                    f"embedding dimension {vec.shape[0]} != corpus dimension {state.store.dim}",
                )
            try:
                return normalize_rows(vec[None, :], context="query")[0]
            except GrabError as exc:
                raise ApiError(422, "bad_embedding", str(exc))
        if state.provider is None:
            raise ApiError(503, "provider_unavailable", "no embedding provider configured")
        try:
            state.provider_calls += 1
            return state.provider.embed(text)
        except ProviderError as exc:
            if exc.bad_dimension:
                raise ApiError(502, "provider_dimension", str(exc))
            raise ApiError(503, "provider_unavailable", str(exc))

    def hit_payload(h, video) -> dict:
        payload = {
            "video_id": h.video_id,
            "frame_index": h.frame_index,
            "timestamp_s": h.frame_index / video.fps,
            "rank": h.rank,
            "score": h.score,
            "thumbnail": f"/thumbnails/{h.video_id}/{h.frame_index}",
        }
        for k in ("s1", "s2", "s_final"):
            if hasattr(h, k):
                payload[k] = getattr(h, k)
        shot = next(
            (kf.shot_id for kf in video.keyframes if kf.frame_index == h.frame_index), None
        )
        if shot is not None:
            payload["shot_id"] = shot
        return payload

    @app.post("/api/v1/search")
    def search(req: SearchRequest):
        query = resolve_embedding(req.query_text, req.query_embedding)
        m = max(req.top_k, state.config.top_m) if req.rerank else req.top_k
        hits = state.index.search(query, m)
        if req.rerank:
            hits = rerank(
                query, hits, state.store,
                RerankParams(refine_k=req.refine_k, expand_m=req.expand_m),
            )
        hits = hits[: req.top_k]
        return {
            "hits": [hit_payload(h, state.store.video(h.video_id)) for h in hits],
            "metadata": {"reranked": req.rerank, "corpus_rows": len(state.store)},
        }

    @app.post("/api/v1/temporal")
    def temporal(req: TemporalRequest):
        try:
            video = state.store.video(req.video_id)
        except NotFoundError as exc:
            raise ApiError(404, "unknown_video", str(exc))
        if not 0 <= req.pivot_frame < video.frame_count:
            raise ApiError(404, "pivot_out_of_range", f"pivot frame {req.pivot_frame} outside video")
        if not state.store.has_sequence(req.video_id):
            raise ApiError(409, "no_sequence_embeddings", f"video {req.video_id!r} lacks sequence embeddings")
        q_start = resolve_embedding(req.query_start_text, req.query_start_embedding)
        q_end = resolve_embedding(req.query_end_text, req.query_end_embedding)
        kwargs = {}
        if req.windows_s:
            kwargs["windows_s"] = tuple(req.windows_s)
        if req.lambda_s is not None:
            kwargs["lambda_s"] = req.lambda_s
        if req.lambda_t is not None:
            kwargs["lambda_t"] = req.lambda_t
        try:
            params = TemporalSearchParams(**kwargs)
        except InputError as exc:
            raise ApiError(400, "bad_params", str(exc))
        result = temporal_search(
            q_start, q_end, PivotRef(req.video_id, req.pivot_frame), state.store, params
        )
        return result.to_dict()

    @app.get("/api/v1/videos/{video_id}/neighbors")
    def neighbors(video_id: str, frame: int, span: float = 5.0):
        try:
            video = state.store.video(video_id)
        except NotFoundError as exc:
            raise ApiError(404, "unknown_video", str(exc))
        if not state.store.has_sequence(video_id):
            # fall back to the keyframe table when no sequence embeddings exist
            frames = sorted(
                kf.frame_index
                for kf in video.keyframes
                if abs(kf.frame_index / video.fps - frame / video.fps) <= span
            )
        else:
            frames = [f for f, _ in state.store.get_frame_window(video_id, frame, span)]
        return {
            "video_id": video_id,
            "frames": [
                {
                    "frame_index": f,
                    "timestamp_s": f / video.fps,
                    "thumbnail": f"/thumbnails/{video_id}/{f}",
                }
                for f in frames
            ],
        }

    @app.post("/api/v1/annotations", status_code=201)
    def post_annotation(req: AnnotationRequest):
        try:
            state.store.video(req.video_id)
        except NotFoundError as exc:
            raise ApiError(404, "unknown_video", str(exc))
        if req.f_s > req.f_e:
            raise ApiError(422, "boundary_order", f"f_s {req.f_s} > f_e {req.f_e}")
        record = state.annotations.append(req.model_dump())
        return record

    @app.get("/api/v1/annotations")
    def get_annotations(session_id: Optional[str] = None):
        return {"annotations": state.annotations.query(session_id)}

    @app.get("/api/v1/corpus")
    def corpus_info():
        return {
            "dim": state.store.dim,
            "rows": len(state.store),
            "videos": [
                {
                    "video_id": v.video_id,
                    "fps": v.fps,
                    "frame_count": v.frame_count,
                    "duration_s": v.duration_s,
                    "has_sequence": state.store.has_sequence(v.video_id),
                }
                for v in state.store.manifest.videos
            ],
        }

    @app.post("/api/v1/split-query")
    def split(body: dict):
        text = body.get("text", "")
        hint = body.get("split_hint")
        try:
            start, end = split_query(text, hint)
        except InputError as exc:
            raise ApiError(400, "bad_request", str(exc))
        return {"start_text": start, "end_text": end}

    @app.get("/thumbnails/{video_id}/{frame_index}")
    def thumbnail(video_id: str, frame_index: int):
        try:
            video = state.store.video(video_id)
        except NotFoundError as exc:
            raise ApiError(404, "unknown_video", str(exc))
        if not video.thumbnail_dir:
            raise ApiError(404, "no_thumbnails", f"video {video_id!r} has no thumbnails")
        path = state.store.manifest.base_dir / video.thumbnail_dir / f"{frame_index}.jpg"
        if not path.exists():
            raise ApiError(404, "no_thumbnail", f"no thumbnail for frame {frame_index}")
        return FileResponse(path)

    return app
