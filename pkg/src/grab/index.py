"""Top-M cosine retrieval over keyframe embeddings.

Two modes share one interface: an exact scan (default, doubles as the
correctness oracle) and an approximate proximity-graph index for larger
corpora. Ties are always broken by (video_id, frame_index) ascending so
results are deterministic.
"""

from __future__ import annotations

import heapq
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import IndexFormatError, InputError
from .store import EmbeddingStore, normalize_rows

MAGIC = b"GRABIDX1"

GRAPH_DEGREE = 32
GRAPH_REVERSE_CAP = 64
QUERY_BEAM = 512
SEED_SAMPLE = 1024
SEED_COUNT = 16
EXACT_BUILD_MAX = 4096  # below this, compute the kNN graph exactly
CLUSTER_ROUNDS = 10
CLUSTER_TARGET_SIZE = 250
DESCENT_PASSES = 2


@dataclass(frozen=True)
class SearchHit:
    video_id: str
    frame_index: int
    row: int
    score: float
    rank: int


def _check_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float32).ravel()
    if q.shape[0] != dim:
        raise InputError(f"query dimension {q.shape[0]} != corpus dimension {dim}")
    return normalize_rows(q[None, :], context="query")[0]


class _BaseIndex:
    mode = "exact"

    def __init__(
        self,
        matrix: np.ndarray,
        video_ids: Sequence[str],
        frame_indices: Sequence[int],
    ):
        if matrix.shape[0] == 0:
            raise InputError("cannot build an index over an empty store")
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.video_ids = np.asarray(video_ids)
        self.frame_indices = np.asarray(frame_indices, dtype=np.int64)
        self.rows, self.dim = self.matrix.shape

    def __len__(self) -> int:
        return self.rows

    def _hits(self, rows: np.ndarray, scores: np.ndarray, M: int) -> List[SearchHit]:
        order = np.lexsort(
            (self.frame_indices[rows], self.video_ids[rows], -scores)
        )[:M]
        return [
            SearchHit(
                video_id=str(self.video_ids[rows[i]]),
                frame_index=int(self.frame_indices[rows[i]]),
                row=int(rows[i]),
                score=float(scores[i]),
                rank=rank,
            )
            for rank, i in enumerate(order, start=1)
        ]

    def search(self, query: np.ndarray, M: int) -> List[SearchHit]:
        raise NotImplementedError


class ExactIndex(_BaseIndex):
    """Contiguous scan over all rows; the true top-M, always."""

    mode = "exact"

    def search(self, query: np.ndarray, M: int) -> List[SearchHit]:
        if M < 1:
            raise InputError("M must be >= 1")
        q = _check_query(query, self.dim)
        scores = self.matrix @ q
        rows = np.arange(self.rows)
        return self._hits(rows, scores, M)


class GraphIndex(_BaseIndex):
    """Approximate search over a proximity graph.

    The graph approximates the k-nearest-neighbor graph (degree 32) with
    reverse edges added up to a cap. Small corpora get the exact graph via
    blocked matrix products; larger ones use repeated random clustering to
    propose candidate edges, refined by neighbor-of-neighbor descent passes.
    Queries run a best-first beam search seeded by the best rows of a fixed
    random sample.
    """

    mode = "approx"

    def __init__(
        self,
        matrix: np.ndarray,
        video_ids: Sequence[str],
        frame_indices: Sequence[int],
        neighbors: Optional[np.ndarray] = None,
        seeds: Optional[np.ndarray] = None,
        beam: int = QUERY_BEAM,
    ):
        super().__init__(matrix, video_ids, frame_indices)
        self.beam = beam
        self.neighbors = neighbors if neighbors is not None else self._build_graph()
        if seeds is None:
            rng = np.random.default_rng(0)
            n_seed = min(SEED_SAMPLE, self.rows)
            seeds = rng.choice(self.rows, size=n_seed, replace=False)
        self.seeds = np.asarray(seeds, dtype=np.int64)

    def _exact_knn(self) -> np.ndarray:
        n = self.rows
        k = min(GRAPH_DEGREE, n - 1)
        knn = np.full((n, k), -1, dtype=np.int32)
        block = 2048
        for start in range(0, n, block):
            stop = min(start + block, n)
            scores = self.matrix[start:stop] @ self.matrix.T
            for local, row in enumerate(range(start, stop)):
                scores[local, row] = -np.inf  # no self-loop
            if k > 0:
                part = np.argpartition(-scores, k - 1, axis=1)[:, :k]
                knn[start:stop] = part
        return knn

    def _select_top_edges(self, candidates: np.ndarray) -> np.ndarray:
        """Keep each row's GRAPH_DEGREE best candidate ids by cosine,
        ignoring self-edges and duplicate proposals."""
        n = self.rows
        k = min(GRAPH_DEGREE, n - 1)
        out = np.full((n, k), -1, dtype=np.int32)
        chunk = 512
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            cand = candidates[start:stop]
            sims = np.einsum("ijk,ik->ij", self.matrix[cand], self.matrix[start:stop])
            sims[cand == np.arange(start, stop)[:, None]] = -np.inf
            order = np.argsort(cand, axis=1)
            sorted_ids = np.take_along_axis(cand, order, axis=1)
            dup_rows, dup_cols = np.nonzero(sorted_ids[:, 1:] == sorted_ids[:, :-1])
            sims[dup_rows, order[:, 1:][dup_rows, dup_cols]] = -np.inf
            kk = min(k, cand.shape[1])
            top = np.argpartition(-sims, kk - 1, axis=1)[:, :kk]
            top_sims = np.take_along_axis(sims, top, axis=1)
            by_sim = np.argsort(-top_sims, axis=1)
            ids = np.take_along_axis(np.take_along_axis(cand, top, axis=1), by_sim, axis=1)
            ids[np.take_along_axis(top_sims, by_sim, axis=1) == -np.inf] = -1
            out[start:stop, :kk] = ids
        return out

    def _clustered_knn(self) -> np.ndarray:
        """Approximate kNN edges: union candidates from repeated random
        clustering rounds, then refine with neighbor-of-neighbor passes."""
        n = self.rows
        rng = np.random.default_rng(0)
        n_clusters = max(1, n // CLUSTER_TARGET_SIZE)
        per_round = min(24, n - 1)
        self_col = np.arange(n)[:, None]
        parts = []
        for _ in range(CLUSTER_ROUNDS):
            centroids = rng.choice(n, size=n_clusters, replace=False)
            assign = np.argmax(self.matrix @ self.matrix[centroids].T, axis=1)
            part = np.full((n, per_round), -1, dtype=np.int32)
            for c in range(n_clusters):
                members = np.nonzero(assign == c)[0]
                if len(members) < 2:
                    continue
                gram = self.matrix[members] @ self.matrix[members].T
                np.fill_diagonal(gram, -np.inf)
                k = min(per_round, len(members) - 1)
                top = np.argpartition(-gram, k - 1, axis=1)[:, :k]
                part[members, :k] = members[top]
            parts.append(part)
        cand = np.concatenate(parts, axis=1)
        knn = self._select_top_edges(np.where(cand < 0, self_col, cand))
        for _ in range(DESCENT_PASSES):
            filled = np.where(knn < 0, self_col, knn)
            cand = np.concatenate([filled, filled[filled].reshape(n, -1)], axis=1)
            knn = self._select_top_edges(cand)
        return knn

    def _build_graph(self) -> np.ndarray:
        n = self.rows
        knn = self._exact_knn() if n <= EXACT_BUILD_MAX else self._clustered_knn()
        # reverse edges, capped per node
        adj: List[List[int]] = [list(r[r >= 0]) for r in knn]
        for src in range(n):
            for dst in knn[src]:
                if dst >= 0 and len(adj[dst]) < GRAPH_REVERSE_CAP:
                    adj[dst].append(int(src))
        width = max((len(a) for a in adj), default=0)
        out = np.full((n, width), -1, dtype=np.int32)
        for i, a in enumerate(adj):
            out[i, : len(a)] = a
        return out

    def search(self, query: np.ndarray, M: int) -> List[SearchHit]:
        if M < 1:
            raise InputError("M must be >= 1")
        q = _check_query(query, self.dim)
        ef = max(self.beam, M)

        seed_scores = self.matrix[self.seeds] @ q
        order = np.argsort(-seed_scores)[:SEED_COUNT]
        visited = set()
        candidates: List[tuple] = []  # max-heap via negated score
        results: List[tuple] = []  # min-heap of (score, row), size <= ef
        for i in order:
            row = int(self.seeds[i])
            if row in visited:
                continue
            visited.add(row)
            score = float(seed_scores[i])
            heapq.heappush(candidates, (-score, row))
            heapq.heappush(results, (score, row))

        while candidates:
            neg, row = heapq.heappop(candidates)
            if len(results) >= ef and -neg < results[0][0]:
                break
            nbrs = self.neighbors[row]
            nbrs = nbrs[nbrs >= 0]
            fresh = [n for n in nbrs if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            scores = self.matrix[fresh] @ q
            for n_row, score in zip(fresh, scores):
                score = float(score)
                if len(results) < ef or score > results[0][0]:
                    heapq.heappush(candidates, (-score, int(n_row)))
                    heapq.heappush(results, (score, int(n_row)))
                    if len(results) > ef:
                        heapq.heappop(results)

        rows = np.array(sorted({row for _, row in results}), dtype=np.int64)
        scores = self.matrix[rows] @ q
        return self._hits(rows, scores, M)


def build_index(
    store: EmbeddingStore | None = None,
    mode: str = "exact",
    *,
    matrix: Optional[np.ndarray] = None,
    video_ids: Optional[Sequence[str]] = None,
    frame_indices: Optional[Sequence[int]] = None,
) -> _BaseIndex:
    """Build an index from a loaded store (or raw arrays, for harnesses)."""
    if store is not None:
        matrix = store.keyframe_matrix
        video_ids = store.row_video_ids
        frame_indices = store.row_frame_indices
    if matrix is None or video_ids is None or frame_indices is None:
        raise InputError("need a store or explicit matrix/ids")
    if mode == "exact":
        return ExactIndex(matrix, video_ids, frame_indices)
    if mode == "approx":
        return GraphIndex(matrix, video_ids, frame_indices)
    raise InputError(f"unknown index mode {mode!r}")


def save_index(index: _BaseIndex, path: Path) -> None:
    """Persist to the versioned binary format (magic GRABIDX1)."""
    unique = sorted(set(str(v) for v in index.video_ids))
    code_of = {v: i for i, v in enumerate(unique)}
    codes = np.array([code_of[str(v)] for v in index.video_ids], dtype=np.uint32)
    header = {
        "mode": index.mode,
        "rows": index.rows,
        "dim": index.dim,
        "videos": unique,
    }
    if isinstance(index, GraphIndex):
        header["neighbor_width"] = int(index.neighbors.shape[1])
        header["seed_count"] = int(index.seeds.shape[0])
        header["beam"] = index.beam
    blob = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())
        f.write(codes.astype("<u4").tobytes())
        f.write(index.frame_indices.astype("<i8").tobytes())
        if isinstance(index, GraphIndex):
            f.write(index.neighbors.astype("<i4").tobytes())
            f.write(index.seeds.astype("<i8").tobytes())


def load_index(path: Path) -> _BaseIndex:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise IndexFormatError(f"{path}: bad magic {data[:8]!r} (want {MAGIC!r})")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + hlen])
    rows, dim = header["rows"], header["dim"]
    off = 12 + hlen

    def take(dtype, count, shape):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(shape)
        off += arr.nbytes
        return arr

    matrix = take("<f4", rows * dim, (rows, dim)).astype(np.float32)
    codes = take("<u4", rows, (rows,))
    frame_indices = take("<i8", rows, (rows,))
    videos = header["videos"]
    video_ids = [videos[c] for c in codes]
    if header["mode"] == "exact":
        return ExactIndex(matrix, video_ids, frame_indices)
    if header["mode"] == "approx":
        width = header["neighbor_width"]
        neighbors = take("<i4", rows * width, (rows, width)).astype(np.int32)
        seeds = take("<i8", header["seed_count"], (header["seed_count"],))
        return GraphIndex(
            matrix, video_ids, frame_indices,
            neighbors=neighbors, seeds=seeds, beam=header.get("beam", QUERY_BEAM),
        )
    raise IndexFormatError(f"{path}: unsupported mode {header['mode']!r}")
