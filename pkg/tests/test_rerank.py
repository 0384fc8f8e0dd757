import math

import numpy as np
import pytest

from grab.errors import InputError
from grab.evalharness import make_corpus_dir
from grab.index import build_index
from grab.rerank import (
    RerankParams,
    expand_query,
    gem_pool,
    refine_database_descriptors,
    rerank,
)
from grab.store import load_corpus, normalize_rows


def straight_line_rerank(query, candidates, matrix, refine_k, expand_m):
    """Independent reimplementation of the two-channel rescoring for
    cross-checking (no shared code with the library path)."""
    q = np.asarray(query, dtype=np.float64)
    q /= np.linalg.norm(q)
    cand = matrix[[c.row for c in candidates]].astype(np.float64)
    n = len(candidates)
    finals = []
    # expanded query: elementwise max over query + top expand_m by rank
    by_rank = sorted(range(n), key=lambda i: candidates[i].rank)[:expand_m]
    qe = q.copy()
    for i in by_rank:
        qe = np.maximum(qe, cand[i])
    qe /= np.linalg.norm(qe)
    for i in range(n):
        sims = cand @ cand[i]
        order = [j for j in np.argsort(-sims) if j != i][: min(refine_k, n - 1)]
        refined = np.vstack([cand[i : i + 1], cand[order]]).mean(axis=0)
        refined /= np.linalg.norm(refined)
        s1 = float(q @ refined)
        s2 = float(qe @ cand[i])
        finals.append((s1 + s2) / 2.0)
    order = sorted(
        range(n),
        key=lambda i: (-finals[i], candidates[i].video_id, candidates[i].frame_index),
    )
    return [candidates[i].row for i in order]


def store_with(tmp_path, matrix):
    manifest = make_corpus_dir(
        tmp_path,
        [{"video_id": "v", "fps": 1.0, "frame_count": len(matrix),
          "keyframes": (list(range(len(matrix))), matrix)}],
    )
    return load_corpus(manifest)


class TestGemPool:
    def test_mean(self):
        out = gem_pool([np.array([1.0, 0.0]), np.array([0.0, 1.0])], p=1)
        np.testing.assert_allclose(out, [0.7071, 0.7071], atol=1e-4)

    def test_max(self):
        out = gem_pool([np.array([1.0, 0.0]), np.array([0.0, 1.0])], p=math.inf)
        np.testing.assert_allclose(out, [0.7071, 0.7071], atol=1e-4)

    def test_single_vector_identity(self):
        v = normalize_rows(np.array([[0.3, -0.2, 0.8]]))[0]
        for p in (1, 3, 1000, math.inf):
            np.testing.assert_allclose(gem_pool([v], p=p), v, atol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            gem_pool([], p=1)

    def test_p1_equals_mean_property(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            vecs = rng.standard_normal((5, 8))
            expected = vecs.mean(axis=0)
            expected /= np.linalg.norm(expected)
            np.testing.assert_allclose(gem_pool(list(vecs), p=1), expected, atol=1e-6)

    def test_p1000_equals_max_on_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            vecs = rng.uniform(0.05, 1.0, size=(4, 6))
            expected = vecs.max(axis=0)
            expected /= np.linalg.norm(expected)
            np.testing.assert_allclose(gem_pool(list(vecs), p=1000), expected, atol=1e-3)


class TestRefine:
    def test_single_candidate_unchanged(self, tmp_path):
        matrix = normalize_rows(np.array([[1.0, 2.0, 2.0]]))
        store = store_with(tmp_path, matrix)
        hits = build_index(store, "exact").search(matrix[0], 1)
        refined = refine_database_descriptors(hits, store)
        np.testing.assert_allclose(refined[0], matrix[0], atol=1e-6)

    def test_identical_candidates_unchanged(self, tmp_path):
        matrix = normalize_rows(np.ones((2, 4)))
        store = store_with(tmp_path, matrix)
        hits = build_index(store, "exact").search(matrix[0], 2)
        refined = refine_database_descriptors(hits, store)
        for r in refined.values():
            np.testing.assert_allclose(r, matrix[0], atol=1e-6)

    def test_near_pair_moves_to_mean(self, tmp_path):
        a = normalize_rows(np.array([[1.0, 0.02, 0.0]]))[0]
        b = normalize_rows(np.array([[1.0, -0.02, 0.0]]))[0]
        c = np.array([0.0, 0.0, 1.0], dtype=np.float32)
        store = store_with(tmp_path, np.stack([a, b, c]))
        hits = build_index(store, "exact").search(a, 3)
        refined = refine_database_descriptors(hits, store, RerankParams(refine_k=1))
        expected = (a + b) / 2
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(refined[0], expected, atol=1e-5)
        np.testing.assert_allclose(refined[1], expected, atol=1e-5)


class TestExpandQuery:
    def test_candidates_equal_query(self, tmp_path):
        q = normalize_rows(np.array([[0.6, 0.8]]))[0]
        store = store_with(tmp_path, np.stack([q, q]))
        hits = build_index(store, "exact").search(q, 2)
        out = expand_query(q, hits, store, RerankParams(expand_m=2))
        np.testing.assert_allclose(out, q, atol=1e-6)

    def test_orthogonal_candidate(self, tmp_path):
        q = np.array([1.0, 0.0], dtype=np.float32)
        store = store_with(tmp_path, np.array([[0.0, 1.0]], dtype=np.float32))
        hits = build_index(store, "exact").search(store.keyframe_matrix[0], 1)
        out = expand_query(q, hits, store, RerankParams(expand_m=1))
        np.testing.assert_allclose(out, [0.7071, 0.7071], atol=1e-4)

    def test_negative_candidate_ignored_by_max(self, tmp_path):
        q = np.array([1.0, 0.0], dtype=np.float32)
        store = store_with(tmp_path, np.array([[-1.0, 0.0]], dtype=np.float32))
        hits = build_index(store, "exact").search(store.keyframe_matrix[0], 1)
        out = expand_query(q, hits, store, RerankParams(expand_m=1))
        np.testing.assert_allclose(out, q, atol=1e-6)


class TestRerank:
    def test_identical_candidates_tie_break(self, tmp_path):
        q = normalize_rows(np.array([[1.0, 1.0, 0.0]]))[0]
        store = store_with(tmp_path, np.stack([q] * 4))
        hits = build_index(store, "exact").search(q, 4)
        out = rerank(q, hits, store)
        assert [h.s_final for h in out] == pytest.approx([1.0] * 4, abs=1e-5)
        assert [h.frame_index for h in out] == [0, 1, 2, 3]

    def test_s_final_is_average(self, tmp_path):
        rng = np.random.default_rng(2)
        store = store_with(tmp_path, rng.standard_normal((12, 8)))
        q = rng.standard_normal(8)
        hits = build_index(store, "exact").search(q, 12)
        for h in rerank(q, hits, store):
            assert h.s_final == pytest.approx((h.s1 + h.s2) / 2, abs=0)

    def test_permutation_property(self, tmp_path):
        rng = np.random.default_rng(3)
        store = store_with(tmp_path, rng.standard_normal((20, 8)))
        for trial in range(25):
            q = rng.standard_normal(8)
            hits = build_index(store, "exact").search(q, 20)
            out = rerank(q, hits, store)
            assert sorted((h.video_id, h.frame_index) for h in out) == sorted(
                (h.video_id, h.frame_index) for h in hits
            )
            assert [h.rank for h in out] == list(range(1, 21))

    def test_reduction_to_identity(self, tmp_path):
        # top expand_m candidates equal the query (g_qe = g_q) and
        # refine_k=0 (self-only refinement) -> ordering equals the input
        rng = np.random.default_rng(4)
        q = normalize_rows(rng.standard_normal((1, 8)))[0]
        tail = rng.standard_normal((6, 8)) * 0.1 + 0.3 * q
        store = store_with(tmp_path, np.vstack([q, q, tail]))
        hits = build_index(store, "exact").search(q, 8)
        out = rerank(q, hits, store, RerankParams(refine_k=0, expand_m=2))
        assert [h.row for h in out] == [h.row for h in hits]
        for h_new, h_old in zip(out, hits):
            assert h_new.s_final == pytest.approx(h_old.score, abs=1e-5)

    def test_order_invariance_to_candidate_listing(self, tmp_path):
        rng = np.random.default_rng(5)
        store = store_with(tmp_path, rng.standard_normal((15, 8)))
        q = rng.standard_normal(8)
        hits = build_index(store, "exact").search(q, 15)
        out1 = rerank(q, hits, store)
        shuffled = list(hits)
        rng.shuffle(shuffled)
        out2 = rerank(q, shuffled, store)
        assert [h.row for h in out1] == [h.row for h in out2]

    def test_matches_straight_line_oracle(self, tmp_path):
        rng = np.random.default_rng(6)
        matrix = normalize_rows(rng.standard_normal((18, 10)))
        store = store_with(tmp_path, matrix)
        for trial in range(10):
            q = rng.standard_normal(10)
            hits = build_index(store, "exact").search(q, 18)
            params = RerankParams(refine_k=4, expand_m=5)
            out = rerank(q, hits, store, params)
            expected = straight_line_rerank(q, hits, store.keyframe_matrix, 4, 5)
            assert [h.row for h in out] == expected

    def test_planted_cluster_promotion(self, tmp_path):
        from grab.evalharness import planted_cluster_corpus

        rng = np.random.default_rng(7)
        promoted = 0
        for trial in range(20):
            matrix, q, target = planted_cluster_corpus(rng)
            store = store_with(tmp_path / f"t{trial}", matrix)
            hits = build_index(store, "exact").search(q, len(matrix))
            raw_rank = next(h.rank for h in hits if h.row == target)
            out = rerank(q, hits, store, RerankParams(refine_k=4, expand_m=5))
            new_rank = next(h.rank for h in out if h.row == target)
            assert raw_rank >= 4  # distractors lead the raw ranking
            promoted += new_rank <= 3
        assert promoted >= 16
