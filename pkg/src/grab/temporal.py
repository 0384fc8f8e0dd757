"""Bidirectional temporal localization around a pivot frame.

Given sub-query embeddings for the start and end of a moment, candidate
frames on each side of the pivot are scored by confidence =
lambda_s * cosine similarity + lambda_t * temporal stability, over several
window sizes; the highest-confidence frame on each side becomes the
boundary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, NotFoundError
from .store import EmbeddingStore

MIN_MOMENT_S = 2.0  # shorter results are flagged, not rejected


@dataclass(frozen=True)
class PivotRef:
    video_id: str
    frame_index: int


@dataclass(frozen=True)
class TemporalSearchParams:
    windows_s: Tuple[float, ...] = (10.0, 15.0, 20.0)
    lambda_s: float = 0.7
    lambda_t: float = 0.3
    neighborhood_radius: int = 2

    def __post_init__(self):
        if not self.windows_s or any(w <= 0 for w in self.windows_s):
            raise InputError("windows_s must be non-empty and positive")
        if self.neighborhood_radius < 1:
            raise InputError("neighborhood_radius must be >= 1")
        total = self.lambda_s + self.lambda_t
        if total <= 0:
            raise InputError("lambda_s + lambda_t must be positive")
        # normalize so the weights always sum to 1
        object.__setattr__(self, "lambda_s", self.lambda_s / total)
        object.__setattr__(self, "lambda_t", self.lambda_t / total)


@dataclass(frozen=True)
class BoundaryCandidate:
    frame_index: int
    similarity: float
    stability: float
    confidence: float


@dataclass
class MomentResult:
    video_id: str
    f_s: int
    f_e: int
    t_s: float
    t_e: float
    confidence_start: float
    confidence_end: float
    window_used_s: Tuple[float, float]
    warning: Optional[str] = None
    candidates_start: List[dict] = field(default_factory=list)
    candidates_end: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "f_s": self.f_s,
            "f_e": self.f_e,
            "t_s": self.t_s,
            "t_e": self.t_e,
            "confidence_start": self.confidence_start,
            "confidence_end": self.confidence_end,
            "window_used_s": list(self.window_used_s),
            "warning": self.warning,
            "candidates_start": self.candidates_start,
            "candidates_end": self.candidates_end,
        }


def similarity(e_q: np.ndarray, e_i: np.ndarray) -> float:
    """Cosine similarity; plain dot product on unit-norm store vectors."""
    e_q = np.asarray(e_q)
    e_i = np.asarray(e_i)
    if e_q.shape != e_i.shape:
        raise InputError(f"dimension mismatch {e_q.shape} vs {e_i.shape}")
    return float(np.dot(e_q, e_i))


def stability(neighbors: Sequence[np.ndarray], e_i: np.ndarray) -> float:
    """1 - min(1, 2*sigma) over the cosine similarities to the neighbors.

    sigma is the population standard deviation. An empty neighborhood gives
    0: a frame with no context cannot demonstrate stability.
    """
    if len(neighbors) == 0:
        return 0.0
    sims = np.asarray(neighbors) @ np.asarray(e_i)
    sigma = float(np.std(sims))
    return 1.0 - min(1.0, 2.0 * sigma)


def adaptive_search(
    e_q: np.ndarray,
    frames: Sequence[Tuple[int, np.ndarray]],
    params: TemporalSearchParams = TemporalSearchParams(),
) -> Tuple[BoundaryCandidate, List[BoundaryCandidate]]:
    """Score every frame and return the best one (earliest on ties) plus the
    full candidate list for diagnostics."""
    if not frames:
        raise InputError("adaptive_search needs at least one frame")
    vectors = np.stack([v for _, v in frames])
    sims = vectors @ np.asarray(e_q)
    n = len(frames)
    r = params.neighborhood_radius
    # neighbor similarities per frame, vectorized over the +-r offsets
    nbr = np.full((n, 2 * r), np.nan)
    col = 0
    for off in list(range(-r, 0)) + list(range(1, r + 1)):
        lo, hi = max(0, -off), min(n, n - off)
        if lo < hi:
            rows = np.arange(lo, hi)
            nbr[rows, col] = np.einsum("ij,ij->i", vectors[rows], vectors[rows + off])
        col += 1
    counts = np.sum(~np.isnan(nbr), axis=1)
    sigma = np.zeros(n)
    has = counts > 0
    if has.any():
        sigma[has] = np.nanstd(nbr[has], axis=1)
    stabilities = np.where(has, 1.0 - np.minimum(1.0, 2.0 * sigma), 0.0)
    confidences = params.lambda_s * sims + params.lambda_t * stabilities
    scored = [
        BoundaryCandidate(frame_index, float(sims[i]), float(stabilities[i]), float(confidences[i]))
        for i, (frame_index, _) in enumerate(frames)
    ]
    best = max(scored, key=lambda c: (c.confidence, -c.frame_index))
    return best, scored


def _side_frames(
    store: EmbeddingStore, video_id: str, pivot: int, window_s: float, side: str
) -> List[Tuple[int, np.ndarray]]:
    frames = store.get_frame_window(video_id, pivot, window_s)
    if side == "start":
        kept = [(f, v) for f, v in frames if f <= pivot]
    else:
        kept = [(f, v) for f, v in frames if f >= pivot]
    if not kept:
        # pivot sits off the stride grid at a video edge; fall back to the
        # nearest grid frame so the side always has one candidate
        kept = store.get_frame_window(video_id, pivot, 0.0)
    return kept


def temporal_search(
    q_start_emb: np.ndarray,
    q_end_emb: np.ndarray,
    pivot: PivotRef,
    store: EmbeddingStore,
    params: TemporalSearchParams = TemporalSearchParams(),
) -> MomentResult:
    """Locate moment boundaries: backward search for the start, forward for
    the end, over every window size; highest confidence wins (ties prefer
    the smaller window, then the earlier frame)."""
    video = store.video(pivot.video_id)
    if not 0 <= pivot.frame_index < video.frame_count:
        raise NotFoundError(
            f"pivot frame {pivot.frame_index} outside [0, {video.frame_count - 1}]"
        )

    best_start = best_end = None  # (candidate, window)
    diag_start: List[dict] = []
    diag_end: List[dict] = []
    for w in sorted(params.windows_s):
        for side, e_q in (("start", q_start_emb), ("end", q_end_emb)):
            frames = _side_frames(store, pivot.video_id, pivot.frame_index, w, side)
            cand, scored = adaptive_search(e_q, frames, params)
            diag = {
                "window_s": w,
                "frame_index": cand.frame_index,
                "confidence": cand.confidence,
                "similarity": cand.similarity,
                "stability": cand.stability,
            }
            if side == "start":
                diag_start.append(diag)
                if best_start is None or cand.confidence > best_start[0].confidence:
                    best_start = (cand, w)
            else:
                diag_end.append(diag)
                if best_end is None or cand.confidence > best_end[0].confidence:
                    best_end = (cand, w)

    (start, w_start), (end, w_end) = best_start, best_end
    fps = video.fps
    t_s, t_e = start.frame_index / fps, end.frame_index / fps
    warning = None
    if t_e - t_s < MIN_MOMENT_S:
        warning = f"moment shorter than {MIN_MOMENT_S:.0f}s ({t_e - t_s:.2f}s)"
    return MomentResult(
        video_id=pivot.video_id,
        f_s=start.frame_index,
        f_e=end.frame_index,
        t_s=t_s,
        t_e=t_e,
        confidence_start=start.confidence,
        confidence_end=end.confidence,
        window_used_s=(w_start, w_end),
        warning=warning,
        candidates_start=diag_start,
        candidates_end=diag_end,
    )


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_query(full_text: str, split_hint: Optional[int] = None) -> Tuple[str, str]:
    """Split a query into start/end portions.

    With a hint (byte offset supplied by the UI), split there. Otherwise
    split at the sentence boundary nearest the text midpoint; single
    sentences are duplicated to both sides.
    """
    if not full_text.strip():
        raise InputError("query text is empty")
    if split_hint is not None:
        raw = full_text.encode("utf-8")
        if not 0 <= split_hint <= len(raw):
            raise InputError(f"split_hint {split_hint} outside text")
        return raw[:split_hint].decode("utf-8").strip(), raw[split_hint:].decode("utf-8").strip()
    sentences = [s for s in _SENTENCE_SPLIT.split(full_text.strip()) if s]
    if len(sentences) < 2:
        return full_text.strip(), full_text.strip()
    mid = len(full_text) / 2
    offsets = []
    pos = 0
    for s in sentences[:-1]:
        pos += len(s) + 1
        offsets.append(pos)
    cut = min(range(len(offsets)), key=lambda i: abs(offsets[i] - mid))
    return (
        " ".join(sentences[: cut + 1]).strip(),
        " ".join(sentences[cut + 1 :]).strip(),
    )
