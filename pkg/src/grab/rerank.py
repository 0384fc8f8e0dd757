"""Global-descriptor reranking of a fixed candidate list.

Two channels are fused: candidate descriptors refined by mean pooling over
their nearest neighbors within the candidate set (s1), and the original
descriptors scored against a max-pooled expanded query (s2). The final
score is the plain average of the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .errors import InputError
from .index import SearchHit
from .store import EmbeddingStore, normalize_rows


@dataclass(frozen=True)
class RerankParams:
    refine_k: int = 10
    expand_m: int = 5
    p_limit_threshold: float = 1000.0

    def __post_init__(self):
        # refine_k=0 means self-only refinement (useful for ablations)
        if self.refine_k < 0 or self.expand_m < 1:
            raise InputError("refine_k must be >= 0 and expand_m >= 1")


@dataclass(frozen=True)
class RerankedHit:
    video_id: str
    frame_index: int
    row: int
    score: float  # raw similarity from the first stage
    rank: int
    s1: float
    s2: float
    s_final: float


def gem_pool(vectors: Sequence[np.ndarray], p: float = 1.0) -> np.ndarray:
    """Generalized-mean pooling of a vector set, re-normalized to unit length.

    p=1 is the component-wise mean, p=inf the component-wise max. Finite
    p>1 uses a sign-preserving power mean (embeddings may be negative).
    """
    if len(vectors) == 0:
        raise InputError("gem_pool needs a non-empty vector list")
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2:
        raise InputError("vectors must share one dimension")
    if p == 1:
        pooled = mat.mean(axis=0)
    elif math.isinf(p) or p >= 1000.0:
        pooled = mat.max(axis=0)
    elif p > 1:
        signed = np.sign(mat) * np.abs(mat) ** p
        m = signed.mean(axis=0)
        pooled = np.sign(m) * np.abs(m) ** (1.0 / p)
    else:
        raise InputError(f"p must be >= 1 or inf, got {p}")
    return normalize_rows(pooled[None, :], context="gem_pool")[0].astype(np.float32)


def _candidate_matrix(candidates: Sequence[SearchHit], store: EmbeddingStore) -> np.ndarray:
    return np.stack([store.keyframe_matrix[c.row] for c in candidates])


def refine_database_descriptors(
    candidates: Sequence[SearchHit],
    store: EmbeddingStore,
    params: RerankParams = RerankParams(),
) -> Dict[int, np.ndarray]:
    """Mean-pool each candidate with its nearest neighbors drawn from within
    the candidate set; returns row -> refined unit vector."""
    if not candidates:
        raise InputError("refine needs at least one candidate")
    mat = _candidate_matrix(candidates, store)
    sims = mat @ mat.T
    k = min(params.refine_k, len(candidates) - 1)
    refined: Dict[int, np.ndarray] = {}
    for i, cand in enumerate(candidates):
        if k > 0:
            others = np.argsort(-np.delete(sims[i], i))[:k]
            # map back to original positions (np.delete shifted them)
            others = np.where(others >= i, others + 1, others)
            members = np.vstack([mat[i : i + 1], mat[others]])
        else:
            members = mat[i : i + 1]
        refined[cand.row] = gem_pool(members, p=1)
    return refined


def expand_query(
    query: np.ndarray,
    candidates: Sequence[SearchHit],
    store: EmbeddingStore,
    params: RerankParams = RerankParams(),
) -> np.ndarray:
    """Max-pool the query with the top candidates, re-normalized."""
    top = sorted(candidates, key=lambda c: c.rank)[: params.expand_m]
    members = [np.asarray(query, dtype=np.float32)]
    members.extend(store.keyframe_matrix[c.row] for c in top)
    return gem_pool(members, p=math.inf)


def rerank(
    query: np.ndarray,
    candidates: Sequence[SearchHit],
    store: EmbeddingStore,
    params: RerankParams = RerankParams(),
) -> List[RerankedHit]:
    """Rescore and reorder the candidate list; output is a permutation of it."""
    if not candidates:
        return []
    q = normalize_rows(np.asarray(query, dtype=np.float32)[None, :], context="query")[0]
    refined = refine_database_descriptors(candidates, store, params)
    q_expanded = expand_query(q, candidates, store, params)
    rescored = []
    for c in candidates:
        original = store.keyframe_matrix[c.row]
        s1 = float(q @ refined[c.row])
        s2 = float(q_expanded @ original)
        rescored.append((c, s1, s2, (s1 + s2) / 2.0))
    rescored.sort(key=lambda t: (-t[3], t[0].video_id, t[0].frame_index))
    return [
        RerankedHit(
            video_id=c.video_id,
            frame_index=c.frame_index,
            row=c.row,
            score=c.score,
            rank=rank,
            s1=s1,
            s2=s2,
            s_final=s_final,
        )
        for rank, (c, s1, s2, s_final) in enumerate(rescored, start=1)
    ]
