import json

import numpy as np
import pytest
from click.testing import CliRunner

from grab.cli import main
from grab.store import load_corpus, write_blob


@pytest.fixture()
def runner():
    return CliRunner()


def build_ingest_inputs(base, n_videos=2, dim=8, seed=0):
    """Write a small raw-input tree: shot files, hash sidecars, embedding
    blobs, and the ingest manifest tying them together."""
    rng = np.random.default_rng(seed)
    base.mkdir(parents=True, exist_ok=True)
    videos = []
    for vi in range(n_videos):
        vid = f"clip{vi}"
        frame_count = 120
        shots = [[0, 59], [60, 119]]
        (base / f"{vid}_shots.json").write_text(json.dumps({
            "video_id": vid, "fps": 25.0, "frame_count": frame_count, "shots": shots,
        }))
        # candidate keyframes for those shots: {a + i*(b-a)//3}
        frames = sorted({a + (i * (b - a)) // 3 for a, b in shots for i in range(4)})
        # hashes far apart pairwise so nothing merges
        hash_lines = [
            json.dumps({"frame_index": f, "phash_hex": f"{(0xF << (4 * k)):016x}"})
            for k, f in enumerate(frames)
        ]
        (base / f"{vid}_hashes.jsonl").write_text("\n".join(hash_lines))
        emb = rng.standard_normal((len(frames), dim)).astype(np.float32)
        write_blob(base / f"{vid}_emb.f32", emb)
        seq = rng.standard_normal((24, dim)).astype(np.float32)
        write_blob(base / f"{vid}_seq.f32", seq)
        videos.append({
            "video_id": vid,
            "fps": 25.0,
            "frame_count": frame_count,
            "shots_file": f"{vid}_shots.json",
            "hashes_file": f"{vid}_hashes.jsonl",
            "embeddings_file": f"{vid}_emb.f32",
            "embedding_frames": frames,
            "sequence_embedding_file": f"{vid}_seq.f32",
            "sequence_stride": 5,
        })
    manifest = base / "ingest.json"
    manifest.write_text(json.dumps({"dim": dim, "videos": videos}))
    return manifest


class TestIngestCommand:
    def test_ingest_writes_corpus(self, runner, tmp_path):
        manifest = build_ingest_inputs(tmp_path / "raw")
        out = tmp_path / "corpus"
        result = runner.invoke(main, ["ingest", "--manifest", str(manifest), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "keyframes retained" in result.output
        store = load_corpus(out / "manifest.json")
        assert {v.video_id for v in store.manifest.videos} == {"clip0", "clip1"}
        assert store.has_sequence("clip0")

    def test_ingest_missing_manifest(self, runner, tmp_path):
        result = runner.invoke(main, ["ingest", "--manifest", str(tmp_path / "nope.json"),
                                      "--out", str(tmp_path / "o")])
        assert result.exit_code != 0


class TestPipelineRoundTrip:
    def test_ingest_index_search_temporal(self, runner, tmp_path):
        manifest = build_ingest_inputs(tmp_path / "raw")
        out = tmp_path / "corpus"
        assert runner.invoke(main, ["ingest", "--manifest", str(manifest), "--out", str(out)]).exit_code == 0

        idx = tmp_path / "index.bin"
        r = runner.invoke(main, ["build-index", "--manifest", str(out / "manifest.json"),
                                 "--mode", "exact", "--out", str(idx)])
        assert r.exit_code == 0, r.output
        assert idx.exists()

        # query with a stored keyframe embedding: it must come back rank 1
        store = load_corpus(out / "manifest.json")
        q = store.get_keyframe_embedding("clip0", store.row_frame_indices[0])
        qfile = tmp_path / "q.json"
        qfile.write_text(json.dumps([float(x) for x in q]))
        r = runner.invoke(main, ["search", "--manifest", str(out / "manifest.json"),
                                 "--index", str(idx), "--query-embedding", str(qfile),
                                 "--top", "3", "--json"])
        assert r.exit_code == 0, r.output
        hits = json.loads(r.output)
        assert hits[0]["video_id"] == "clip0"
        assert hits[0]["score"] == pytest.approx(1.0, abs=1e-5)

        r = runner.invoke(main, ["search", "--manifest", str(out / "manifest.json"),
                                 "--query-embedding", str(qfile), "--rerank", "--top", "3"])
        assert r.exit_code == 0, r.output
        assert len(r.output.strip().splitlines()) == 3

        r = runner.invoke(main, ["temporal", "--manifest", str(out / "manifest.json"),
                                 "--video", "clip0", "--pivot-frame", "60",
                                 "--query-start-emb", str(qfile), "--query-end-emb", str(qfile)])
        assert r.exit_code == 0, r.output
        body = json.loads(r.output)
        assert body["f_s"] <= 60 <= body["f_e"]
        assert body["video_id"] == "clip0"


class TestEvalCommands:
    def test_dedup_pass_exit_zero(self, runner):
        r = runner.invoke(main, ["eval", "dedup", "--seed", "42", "--trials", "3"])
        assert r.exit_code == 0, r.output
        assert "dedup: 3/3" in r.output and "PASS" in r.output

    def test_dedup_json_output(self, runner):
        r = runner.invoke(main, ["eval", "dedup", "--trials", "2", "--json"])
        assert r.exit_code == 0
        report = json.loads(r.output)
        assert report["scenario"] == "dedup" and report["passed"] is True

    def test_rerank_small(self, runner):
        r = runner.invoke(main, ["eval", "rerank", "--seed", "42", "--trials", "10"])
        assert r.exit_code == 0, r.output
        assert "PASS" in r.output

    def test_abts_small(self, runner):
        r = runner.invoke(main, ["eval", "abts", "--seed", "42", "--trials", "5"])
        assert r.exit_code == 0, r.output
        assert "PASS" in r.output

    def test_bad_spread_fails(self, runner):
        r = runner.invoke(main, ["eval", "dedup", "--spread", "9", "--trials", "1"])
        assert r.exit_code != 0
