"""Corpus ingestion: shot lists in, deduplicated keyframe catalog out.

Four keyframes are sampled per shot at a + floor(i*(b-a)/3), near-duplicates
are removed within each shot by greedy clustering on perceptual-hash
distance, and the retained frames become catalog records pointing at their
embedding rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np

from .errors import IngestError, InputError
from .hashing import DedupConfig, PerceptualHash, compute_phash, is_near_duplicate

DEFAULT_FALLBACK_SHOT_LEN = 120


@dataclass(frozen=True)
class ShotBoundary:
    """Inclusive frame range [a, b] of one shot."""

    video_id: str
    a: int
    b: int

    def __post_init__(self):
        if self.a < 0 or self.b < self.a:
            raise InputError(f"bad shot range [{self.a}, {self.b}]")


@dataclass(frozen=True)
class KeyframeRecord:
    video_id: str
    frame_index: int
    timestamp_s: float
    phash: PerceptualHash
    embedding_id: int
    shot_id: int


@dataclass
class VideoCatalog:
    video_id: str
    fps: float
    frame_count: int
    records: List[KeyframeRecord] = field(default_factory=list)


@dataclass
class Catalog:
    """Keyframe catalog keyed by video; re-ingest replaces a video wholesale."""

    videos: Dict[str, VideoCatalog] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v.records) for v in self.videos.values())

    def replace(self, video: VideoCatalog) -> None:
        self.videos[video.video_id] = video


def select_keyframe_indices(shot: ShotBoundary) -> List[int]:
    """Four evenly spaced frame indices within [a, b], de-duplicated.

    Degenerate shots (b - a < 3) collapse coinciding indices, so the result
    may have 1-4 entries; it always contains a, and b whenever b > a.
    """
    span = shot.b - shot.a
    indices = [shot.a + (i * span) // 3 for i in range(4)]
    return sorted(set(indices))


def deduplicate_shot(
    keyframes: List[KeyframeRecord], cfg: DedupConfig
) -> List[KeyframeRecord]:
    """Greedy within-shot dedup: a frame joins the current cluster iff it is
    a near-duplicate of the cluster's representative (its first frame);
    otherwise it starts a new cluster. Representatives are retained."""
    retained: List[KeyframeRecord] = []
    for kf in keyframes:
        if retained and is_near_duplicate(kf.phash, retained[-1].phash, cfg):
            continue
        retained.append(kf)
    return retained


def uniform_shots(video_id: str, frame_count: int, shot_len: int) -> List[ShotBoundary]:
    """Fallback segmentation when no shot detector output is available."""
    if shot_len < 1:
        raise InputError(f"shot_len must be >= 1, got {shot_len}")
    return [
        ShotBoundary(video_id, start, min(start + shot_len - 1, frame_count - 1))
        for start in range(0, frame_count, shot_len)
    ]


def load_shot_file(path: Path) -> tuple[str, float, int, List[ShotBoundary]]:
    """Parse the external shot-detector JSON file."""
    data = json.loads(Path(path).read_text())
    video_id = data["video_id"]
    shots = [ShotBoundary(video_id, a, b) for a, b in data["shots"]]
    return video_id, float(data["fps"]), int(data["frame_count"]), shots


def load_hash_file(path: Path) -> Dict[int, PerceptualHash]:
    """Parse the precomputed-hash JSONL sidecar (frame_index -> pHash)."""
    hashes: Dict[int, PerceptualHash] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        hashes[int(rec["frame_index"])] = PerceptualHash.from_hex(rec["phash_hex"])
    return hashes


def _validate_shots(video_id: str, shots: List[ShotBoundary], frame_count: int) -> None:
    prev_end = -1
    for shot in shots:
        if shot.a <= prev_end:
            raise IngestError(video_id, "shots", f"overlapping or unsorted at [{shot.a}, {shot.b}]")
        if shot.b >= frame_count:
            raise IngestError(video_id, "shots", f"shot [{shot.a}, {shot.b}] exceeds frame_count {frame_count}")
        prev_end = shot.b


def ingest_video(
    catalog: Catalog,
    video_id: str,
    fps: float,
    frame_count: int,
    shots: Optional[List[ShotBoundary]],
    embeddings: np.ndarray,
    embedding_frames: List[int],
    corpus_dim: int,
    hashes: Optional[Mapping[int, PerceptualHash]] = None,
    frames: Optional[Mapping[int, np.ndarray]] = None,
    cfg: DedupConfig = DedupConfig(),
    fallback_shot_len: int = DEFAULT_FALLBACK_SHOT_LEN,
) -> VideoCatalog:
    """Ingest one video into the catalog; idempotent per video_id.

    `embeddings` holds one row per entry of `embedding_frames`; retained
    keyframes look their row up by frame index. Hashes come either
    precomputed (`hashes`) or from grayscale rasters (`frames`).
    """
    if fps <= 0 or frame_count < 1:
        raise IngestError(video_id, "fps/frame_count", "must be positive")
    if shots is None or not shots:
        shots = uniform_shots(video_id, frame_count, fallback_shot_len)
    _validate_shots(video_id, shots, frame_count)

    embeddings = np.asarray(embeddings)
    if embeddings.ndim != 2 or embeddings.shape[1] != corpus_dim:
        raise IngestError(
            video_id, "embeddings",
            f"expected shape (*, {corpus_dim}), got {embeddings.shape}",
        )
    row_of = {f: i for i, f in enumerate(embedding_frames)}

    def hash_of(frame_index: int) -> PerceptualHash:
        if hashes is not None and frame_index in hashes:
            return hashes[frame_index]
        if frames is not None and frame_index in frames:
            return compute_phash(frames[frame_index])
        raise IngestError(video_id, "hashes", f"no hash or raster for frame {frame_index}")

    records: List[KeyframeRecord] = []
    for shot_id, shot in enumerate(shots):
        candidates = [
            KeyframeRecord(
                video_id=video_id,
                frame_index=fi,
                timestamp_s=fi / fps,
                phash=hash_of(fi),
                embedding_id=-1,
                shot_id=shot_id,
            )
            for fi in select_keyframe_indices(shot)
        ]
        for kf in deduplicate_shot(candidates, cfg):
            if kf.frame_index not in row_of:
                raise IngestError(
                    video_id, "embeddings",
                    f"missing embedding for retained frame {kf.frame_index}",
                )
            records.append(
                KeyframeRecord(
                    video_id=kf.video_id,
                    frame_index=kf.frame_index,
                    timestamp_s=kf.timestamp_s,
                    phash=kf.phash,
                    embedding_id=row_of[kf.frame_index],
                    shot_id=kf.shot_id,
                )
            )

    video = VideoCatalog(video_id, fps, frame_count, records)
    catalog.replace(video)
    return video
