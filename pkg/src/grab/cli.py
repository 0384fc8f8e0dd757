"""Operator command line: ingest, index build, search, temporal search,
service launch, and the synthetic evaluation harness."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import GrabError
from .evalharness import eval_abts, eval_dedup, eval_rerank
from .hashing import DedupConfig
from .index import build_index, load_index, save_index
from .ingest import (
    Catalog,
    DEFAULT_FALLBACK_SHOT_LEN,
    ingest_video,
    load_hash_file,
    load_shot_file,
)
from .rerank import RerankParams, rerank
from .store import (
    CorpusManifest,
    KeyframeEntry,
    VideoManifest,
    load_corpus,
    read_blob,
    write_blob,
)
from .temporal import PivotRef, TemporalSearchParams, temporal_search


@click.group()
def main():
    """Video-corpus moment retrieval engine."""


def _load_query_vec(path: str, dim: int) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".json":
        return np.asarray(json.loads(p.read_text()), dtype=np.float32)
    return read_blob(p, 1, dim)[0]


def _load_rasters(frames_dir: Path) -> dict:
    from PIL import Image

    rasters = {}
    for f in sorted(Path(frames_dir).iterdir()):
        if f.suffix.lower() in (".png", ".jpg", ".jpeg", ".pgm"):
            rasters[int(f.stem)] = np.asarray(Image.open(f).convert("L"))
    return rasters


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--tau", default=0.8, show_default=True)
@click.option("--fallback-shot-len", default=DEFAULT_FALLBACK_SHOT_LEN, show_default=True)
def ingest(manifest_path, out_dir, tau, fallback_shot_len):
    """Build a deduplicated keyframe corpus from an ingest manifest.

    The ingest manifest lists raw per-video inputs: shot files, precomputed
    hashes or frame rasters, and candidate-keyframe embeddings.
    """
    spec = json.loads(Path(manifest_path).read_text())
    base = Path(manifest_path).parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = DedupConfig(tau=tau)
    catalog = Catalog()
    corpus = CorpusManifest(base_dir=out)
    dim = int(spec["dim"])
    for v in spec["videos"]:
        vid = v["video_id"]
        shots = None
        fps, frame_count = float(v["fps"]), int(v["frame_count"])
        if v.get("shots_file"):
            _, fps, frame_count, shots = load_shot_file(base / v["shots_file"])
        hashes = load_hash_file(base / v["hashes_file"]) if v.get("hashes_file") else None
        rasters = _load_rasters(base / v["frames_dir"]) if v.get("frames_dir") else None
        frames_list = v["embedding_frames"]
        embeddings = read_blob(base / v["embeddings_file"], len(frames_list), dim)
        video = ingest_video(
            catalog, vid, fps, frame_count, shots, embeddings, frames_list, dim,
            hashes=hashes, frames=rasters, cfg=cfg, fallback_shot_len=fallback_shot_len,
        )
        retained = np.stack([embeddings[r.embedding_id] for r in video.records])
        kf_file = f"{vid}_keyframes.f32"
        write_blob(out / kf_file, retained)
        entry = VideoManifest(
            video_id=vid,
            fps=fps,
            frame_count=frame_count,
            duration_s=frame_count / fps,
            embedding_file=kf_file,
            dim=dim,
            dtype="f32le",
            keyframes=[
                KeyframeEntry(
                    frame_index=r.frame_index,
                    row=i,
                    shot_id=r.shot_id,
                    phash_hex=r.phash.to_hex(),
                )
                for i, r in enumerate(video.records)
            ],
        )
        if v.get("sequence_embedding_file"):
            seq_src = base / v["sequence_embedding_file"]
            seq_file = f"{vid}_sequence.f32"
            (out / seq_file).write_bytes(seq_src.read_bytes())
            entry.sequence_embedding_file = seq_file
            entry.sequence_stride = int(v.get("sequence_stride", 1))
        corpus.videos.append(entry)
        click.echo(f"{vid}: {len(video.records)} keyframes retained")
    corpus.dump(out / "manifest.json")
    click.echo(f"wrote {out / 'manifest.json'} ({len(catalog)} keyframes total)")


@main.command("build-index")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["exact", "approx"]), default="exact", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def build_index_cmd(manifest_path, mode, out_path):
    """Build and persist a search index over the corpus keyframes."""
    store = load_corpus(manifest_path)
    index = build_index(store, mode)
    save_index(index, Path(out_path))
    click.echo(f"built {mode} index over {len(index)} rows -> {out_path}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True))
@click.option("--index", "index_path", type=click.Path(exists=True))
@click.option("--query-embedding", "query_path", required=True, type=click.Path(exists=True))
@click.option("--top", default=20, show_default=True)
@click.option("--rerank/--no-rerank", "do_rerank", default=False)
@click.option("--refine-k", default=10, show_default=True)
@click.option("--expand-m", default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def search(manifest_path, index_path, query_path, top, do_rerank, refine_k, expand_m, as_json):
    """Top-K cosine search, optionally reranked."""
    if not manifest_path:
        raise click.UsageError("--manifest is required")
    store = load_corpus(manifest_path)
    index = load_index(Path(index_path)) if index_path else build_index(store, "exact")
    query = _load_query_vec(query_path, store.dim)
    hits = index.search(query, max(top, 100) if do_rerank else top)
    if do_rerank:
        hits = rerank(query, hits, store, RerankParams(refine_k=refine_k, expand_m=expand_m))
    hits = hits[:top]
    if as_json:
        click.echo(json.dumps([h.__dict__ for h in hits]))
    else:
        for h in hits:
            score = getattr(h, "s_final", h.score)
            click.echo(f"{h.rank:3d}  {h.video_id}:{h.frame_index}  {score:.4f}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--video", "video_id", required=True)
@click.option("--pivot-frame", required=True, type=int)
@click.option("--query-start-emb", required=True, type=click.Path(exists=True))
@click.option("--query-end-emb", required=True, type=click.Path(exists=True))
@click.option("--windows", default="10,15,20", show_default=True)
@click.option("--lambda-s", default=0.7, show_default=True)
@click.option("--lambda-t", default=0.3, show_default=True)
def temporal(manifest_path, video_id, pivot_frame, query_start_emb, query_end_emb,
             windows, lambda_s, lambda_t):
    """Locate moment boundaries around a pivot frame."""
    store = load_corpus(manifest_path)
    params = TemporalSearchParams(
        windows_s=tuple(float(w) for w in windows.split(",")),
        lambda_s=lambda_s,
        lambda_t=lambda_t,
    )
    result = temporal_search(
        _load_query_vec(query_start_emb, store.dim),
        _load_query_vec(query_end_emb, store.dim),
        PivotRef(video_id, pivot_frame),
        store,
        params,
    )
    click.echo(json.dumps(result.to_dict()))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Launch the HTTP service (configured via GRAB_* environment)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    addr = None
    import os
    if os.environ.get("GRAB_LISTEN_ADDR"):
        addr = os.environ["GRAB_LISTEN_ADDR"]
        host, port = addr.rsplit(":", 1)[0], int(addr.rsplit(":", 1)[1])
    uvicorn.run(create_app(ServiceConfig.from_env()), host=host, port=port)


@main.group()
def eval():
    """Synthetic evaluation scenarios (exit code 0 iff all bars met)."""


def _emit(report, as_json):
    if as_json:
        click.echo(report.to_json())
    else:
        click.echo(
            f"{report.scenario}: {report.successes}/{report.trials} "
            f"({report.tolerance}) -> {'PASS' if report.passed else 'FAIL'} "
            f"[{report.wall_clock_s:.1f}s]"
        )
    sys.exit(0 if report.passed else 1)


@eval.command("dedup")
@click.option("--seed", default=42, show_default=True)
@click.option("--clusters", default=10, show_default=True)
@click.option("--spread", default=6, show_default=True)
@click.option("--trials", default=20, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def eval_dedup_cmd(seed, clusters, spread, trials, as_json):
    _emit(eval_dedup(seed, clusters=clusters, spread=spread, trials=trials), as_json)


@eval.command("rerank")
@click.option("--seed", default=42, show_default=True)
@click.option("--trials", default=100, show_default=True)
@click.option("--refine-k", default=4, show_default=True)
@click.option("--expand-m", default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def eval_rerank_cmd(seed, trials, refine_k, expand_m, as_json):
    _emit(eval_rerank(seed, trials=trials, refine_k=refine_k, expand_m=expand_m), as_json)


@eval.command("abts")
@click.option("--seed", default=42, show_default=True)
@click.option("--trials", default=100, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def eval_abts_cmd(seed, trials, as_json):
    _emit(eval_abts(seed, trials=trials), as_json)


if __name__ == "__main__":
    main()
