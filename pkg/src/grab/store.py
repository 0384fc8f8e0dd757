"""Embedding store: corpus manifest + raw float32 blobs, normalized at load.

Blobs are headerless little-endian float32, row-major; shape comes from the
manifest. Every vector is L2-normalized once at load so downstream dot
products are cosines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CapabilityError, LoadError, NotFoundError

DTYPE_TAG = "f32le"
_DTYPE = np.dtype("<f4")
NORM_TOL = 1e-5


@dataclass
class KeyframeEntry:
    frame_index: int
    row: int
    shot_id: int = 0
    phash_hex: Optional[str] = None


@dataclass
class VideoManifest:
    video_id: str
    fps: float
    frame_count: int
    duration_s: float
    embedding_file: str
    dim: int
    dtype: str
    keyframes: List[KeyframeEntry] = field(default_factory=list)
    sequence_embedding_file: Optional[str] = None
    sequence_stride: Optional[int] = None
    thumbnail_dir: Optional[str] = None


@dataclass
class CorpusManifest:
    videos: List[VideoManifest] = field(default_factory=list)
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path: Path) -> "CorpusManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        videos = []
        for v in data.get("videos", []):
            videos.append(
                VideoManifest(
                    video_id=v["video_id"],
                    fps=float(v["fps"]),
                    frame_count=int(v["frame_count"]),
                    duration_s=float(v.get("duration_s", v["frame_count"] / v["fps"])),
                    embedding_file=v["embedding_file"],
                    dim=int(v["dim"]),
                    dtype=v.get("dtype", DTYPE_TAG),
                    keyframes=[
                        KeyframeEntry(
                            frame_index=int(k["frame_index"]),
                            row=int(k["row"]),
                            shot_id=int(k.get("shot_id", 0)),
                            phash_hex=k.get("phash_hex"),
                        )
                        for k in v.get("keyframes", [])
                    ],
                    sequence_embedding_file=v.get("sequence_embedding_file"),
                    sequence_stride=v.get("sequence_stride"),
                    thumbnail_dir=v.get("thumbnail_dir"),
                )
            )
        return cls(videos=videos, base_dir=path.parent)

    def dump(self, path: Path) -> None:
        out = {"videos": []}
        for v in self.videos:
            entry = {
                "video_id": v.video_id,
                "fps": v.fps,
                "frame_count": v.frame_count,
                "duration_s": v.duration_s,
                "embedding_file": v.embedding_file,
                "dim": v.dim,
                "dtype": v.dtype,
                "keyframes": [
                    {
                        "frame_index": k.frame_index,
                        "row": k.row,
                        "shot_id": k.shot_id,
                        **({"phash_hex": k.phash_hex} if k.phash_hex else {}),
                    }
                    for k in v.keyframes
                ],
            }
            if v.sequence_embedding_file:
                entry["sequence_embedding_file"] = v.sequence_embedding_file
                entry["sequence_stride"] = v.sequence_stride
            if v.thumbnail_dir:
                entry["thumbnail_dir"] = v.thumbnail_dir
            out["videos"].append(entry)
        Path(path).write_text(json.dumps(out, indent=2))


def write_blob(path: Path, vectors: np.ndarray) -> None:
    """Write vectors as headerless little-endian float32, row-major."""
    arr = np.ascontiguousarray(np.asarray(vectors), dtype=_DTYPE)
    Path(path).write_bytes(arr.tobytes())


def read_blob(path: Path, rows: int, dim: int) -> np.ndarray:
    """Read a raw f32le blob; the byte length must be exactly rows*dim*4."""
    data = Path(path).read_bytes()
    expected = rows * dim * 4
    if len(data) != expected:
        raise LoadError(f"{path}: expected {expected} bytes ({rows}x{dim} f32le), got {len(data)}")
    return np.frombuffer(data, dtype=_DTYPE).reshape(rows, dim).astype(np.float32)


def normalize_rows(vectors: np.ndarray, *, context: str = "") -> np.ndarray:
    """L2-normalize each row; reject NaN/Inf and zero-norm rows."""
    vectors = np.asarray(vectors, dtype=np.float32)
    bad = ~np.isfinite(vectors).all(axis=1)
    if bad.any():
        raise LoadError(f"{context}: non-finite components in row {int(np.flatnonzero(bad)[0])}")
    norms = np.linalg.norm(vectors, axis=1)
    zero = norms == 0
    if zero.any():
        raise LoadError(f"{context}: zero-norm row {int(np.flatnonzero(zero)[0])}")
    return vectors / norms[:, None]


@dataclass
class _VideoData:
    manifest: VideoManifest
    sequence: Optional[np.ndarray]  # normalized strided frame embeddings
    sequence_frames: Optional[np.ndarray]  # frame index per sequence row


class EmbeddingStore:
    """Immutable snapshot of all corpus embeddings; safe for concurrent reads."""

    def __init__(self, manifest: CorpusManifest):
        self.manifest = manifest
        self._videos: Dict[str, _VideoData] = {}
        matrices: List[np.ndarray] = []
        video_ids: List[str] = []
        frame_indices: List[int] = []
        self._row_lookup: Dict[Tuple[str, int], int] = {}
        offset = 0
        dims = {v.dim for v in manifest.videos}
        if len(dims) > 1:
            raise LoadError(f"corpus dimension must be constant, saw {sorted(dims)}")
        self.dim = dims.pop() if dims else 0
        for v in manifest.videos:
            if v.dtype != DTYPE_TAG:
                raise LoadError(f"{v.video_id}: unsupported dtype tag {v.dtype!r}")
            if v.frame_count < 1:
                raise LoadError(f"{v.video_id}: frame_count must be >= 1")
            rows = len(v.keyframes)
            if sorted(k.row for k in v.keyframes) != list(range(rows)):
                raise LoadError(f"{v.video_id}: keyframe rows must cover 0..{rows - 1}")
            mat = read_blob(manifest.base_dir / v.embedding_file, rows, v.dim)
            mat = normalize_rows(mat, context=f"{v.video_id} keyframes")
            matrices.append(mat)
            for k in v.keyframes:
                self._row_lookup[(v.video_id, k.frame_index)] = offset + k.row
            video_ids.extend(v.video_id for _ in v.keyframes)
            ordered = sorted(v.keyframes, key=lambda k: k.row)
            frame_indices.extend(k.frame_index for k in ordered)
            offset += rows

            seq = seq_frames = None
            if v.sequence_embedding_file:
                stride = int(v.sequence_stride or 1)
                if stride < 1:
                    raise LoadError(f"{v.video_id}: stride must be >= 1")
                seq_frames = np.arange(0, v.frame_count, stride)
                seq = read_blob(
                    manifest.base_dir / v.sequence_embedding_file, len(seq_frames), v.dim
                )
                seq = normalize_rows(seq, context=f"{v.video_id} sequence")
            self._videos[v.video_id] = _VideoData(v, seq, seq_frames)

        self.keyframe_matrix = (
            np.vstack(matrices) if matrices else np.zeros((0, self.dim), np.float32)
        )
        self.row_video_ids = video_ids
        self.row_frame_indices = frame_indices

    def __len__(self) -> int:
        return self.keyframe_matrix.shape[0]

    @property
    def video_ids(self) -> List[str]:
        return list(self._videos)

    def video(self, video_id: str) -> VideoManifest:
        if video_id not in self._videos:
            raise NotFoundError(f"unknown video {video_id!r}")
        return self._videos[video_id].manifest

    def row_of(self, video_id: str, frame_index: int) -> int:
        key = (video_id, frame_index)
        if key not in self._row_lookup:
            raise NotFoundError(f"no keyframe ({video_id!r}, frame {frame_index})")
        return self._row_lookup[key]

    def get_keyframe_embedding(self, video_id: str, frame_index: int) -> np.ndarray:
        return self.keyframe_matrix[self.row_of(video_id, frame_index)]

    def has_sequence(self, video_id: str) -> bool:
        return self._videos[video_id].sequence is not None if video_id in self._videos else False

    def get_frame_window(
        self, video_id: str, center: int, half_span_s: float
    ) -> List[Tuple[int, np.ndarray]]:
        """Strided frames with timestamps within +-half_span_s of the center
        frame's timestamp, clamped to the video. Falls back to the single
        nearest strided frame when the window catches none (half_span_s=0
        off the stride grid)."""
        vd = self._videos.get(video_id)
        if vd is None:
            raise NotFoundError(f"unknown video {video_id!r}")
        if vd.sequence is None:
            raise CapabilityError(f"video {video_id!r} has no sequence embeddings")
        fps = vd.manifest.fps
        t_center = center / fps
        times = vd.sequence_frames / fps
        mask = (times >= t_center - half_span_s) & (times <= t_center + half_span_s)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            idx = np.array([int(np.argmin(np.abs(vd.sequence_frames - center)))])
        return [(int(vd.sequence_frames[i]), vd.sequence[i]) for i in idx]


def load_corpus(manifest: CorpusManifest | Path | str) -> EmbeddingStore:
    """Load and validate the whole corpus into an immutable store snapshot."""
    if not isinstance(manifest, CorpusManifest):
        manifest = CorpusManifest.load(Path(manifest))
    return EmbeddingStore(manifest)
