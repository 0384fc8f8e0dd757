import numpy as np
import pytest

from grab.errors import CapabilityError, InputError, NotFoundError
from grab.evalharness import make_corpus_dir
from grab.store import load_corpus, normalize_rows
from grab.temporal import (
    PivotRef,
    TemporalSearchParams,
    adaptive_search,
    similarity,
    split_query,
    stability,
    temporal_search,
)


def unit(*xs):
    return normalize_rows(np.array([xs], dtype=np.float32))[0]


def vec_with_cos(c):
    """2-d unit vector with prescribed cosine to (1, 0)."""
    return np.array([c, np.sqrt(1 - c * c)], dtype=np.float32)


class TestSimilarity:
    def test_self(self):
        v = unit(0.3, 0.4, 0.5)
        assert similarity(v, v) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal(self):
        assert similarity(unit(1, 0), unit(0, 1)) == pytest.approx(0.0, abs=1e-7)

    def test_45_degrees(self):
        assert similarity(unit(1, 0), unit(1, 1)) == pytest.approx(0.7071, abs=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            similarity(unit(1, 0), unit(1, 0, 0))


class TestStability:
    def test_identical_neighbors(self):
        e = vec_with_cos(1.0)
        assert stability([e, e, e], e) == pytest.approx(1.0, abs=1e-6)

    def test_two_point_half_sigma(self):
        e = np.array([1.0, 0.0], dtype=np.float32)
        neighbors = [vec_with_cos(1.0), vec_with_cos(0.0)]  # sims {1, 0}, sigma 0.5
        assert stability(neighbors, e) == pytest.approx(0.0, abs=1e-6)

    def test_population_sigma_hand_value(self):
        e = np.array([1.0, 0.0], dtype=np.float32)
        neighbors = [vec_with_cos(c) for c in (0.9, 0.8, 0.85, 0.95)]
        # population sigma of {0.9, 0.8, 0.85, 0.95} = 0.0559017
        assert stability(neighbors, e) == pytest.approx(0.888197, abs=1e-3)

    def test_empty_neighborhood(self):
        assert stability([], np.array([1.0, 0.0])) == 0.0

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            e = normalize_rows(rng.standard_normal((1, 6)))[0]
            nbrs = list(normalize_rows(rng.standard_normal((4, 6))))
            assert 0.0 <= stability(nbrs, e) <= 1.0


def brute_force_adaptive(e_q, frames, lam_s, lam_t, radius):
    """Independent per-frame scorer used as the oracle."""
    best = None
    for i, (fi, v) in enumerate(frames):
        s = float(np.dot(e_q, v))
        nbrs = [frames[j][1] for j in range(max(0, i - radius), min(len(frames), i + radius + 1)) if j != i]
        if nbrs:
            sims = [float(np.dot(n, v)) for n in nbrs]
            mu = sum(sims) / len(sims)
            sigma = (sum((x - mu) ** 2 for x in sims) / len(sims)) ** 0.5
            t = 1.0 - min(1.0, 2.0 * sigma)
        else:
            t = 0.0
        c = lam_s * s + lam_t * t
        if best is None or c > best[1]:
            best = (fi, c)
    return best


class TestAdaptiveSearch:
    def test_single_frame_confidence_is_lambda_s(self):
        q = unit(1, 0, 0)
        params = TemporalSearchParams()
        best, _ = adaptive_search(q, [(7, q)], params)
        assert best.frame_index == 7
        assert best.confidence == pytest.approx(params.lambda_s, abs=1e-6)
        assert best.stability == 0.0

    def test_lambda_t_zero_is_similarity_argmax(self):
        rng = np.random.default_rng(1)
        q = normalize_rows(rng.standard_normal((1, 8)))[0]
        frames = [(i, normalize_rows(rng.standard_normal((1, 8)))[0]) for i in range(30)]
        params = TemporalSearchParams(lambda_s=1.0, lambda_t=0.0)
        best, _ = adaptive_search(q, frames, params)
        sims = [float(np.dot(q, v)) for _, v in frames]
        assert best.frame_index == frames[int(np.argmax(sims))][0]

    def test_plateau_against_oracle(self):
        rng = np.random.default_rng(2)
        q = normalize_rows(rng.standard_normal((1, 16)))[0]
        frames = []
        for i in range(50):
            if 15 <= i < 35:  # stable plateau matching the query
                v = q + 0.02 * rng.standard_normal(16)
            else:
                v = rng.standard_normal(16)
            frames.append((i, (v / np.linalg.norm(v)).astype(np.float32)))
        params = TemporalSearchParams()
        best, scored = adaptive_search(q, frames, params)
        assert 15 <= best.frame_index < 35
        oracle = brute_force_adaptive(q, frames, params.lambda_s, params.lambda_t, 2)
        assert best.frame_index == oracle[0]
        assert best.confidence == pytest.approx(oracle[1], abs=1e-5)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(3)
        params = TemporalSearchParams()
        for _ in range(20):
            q = normalize_rows(rng.standard_normal((1, 8)))[0]
            frames = [
                (i, normalize_rows(rng.standard_normal((1, 8)))[0])
                for i in range(int(rng.integers(1, 40)))
            ]
            best, _ = adaptive_search(q, frames, params)
            oracle = brute_force_adaptive(q, frames, params.lambda_s, params.lambda_t, 2)
            assert best.frame_index == oracle[0]
            assert best.confidence == pytest.approx(oracle[1], abs=1e-5)

    def test_confidence_monotone_in_similarity_and_stability(self):
        p = TemporalSearchParams()
        for s1, s2 in [(0.1, 0.2), (-0.5, 0.5)]:
            assert p.lambda_s * s1 + p.lambda_t * 0.5 < p.lambda_s * s2 + p.lambda_t * 0.5
        for t1, t2 in [(0.0, 0.3), (0.5, 1.0)]:
            assert p.lambda_s * 0.4 + p.lambda_t * t1 < p.lambda_s * 0.4 + p.lambda_t * t2


def sequence_store(tmp_path, seq, fps=25.0, stride=5, keyframes=None):
    frame_count = (len(seq) - 1) * stride + 1
    videos = [{
        "video_id": "v",
        "fps": fps,
        "frame_count": frame_count,
        "keyframes": keyframes or ([0], seq[:1]),
        "sequence": (stride, seq),
    }]
    return load_corpus(make_corpus_dir(tmp_path, videos))


class TestTemporalSearch:
    def test_short_video_clamps(self, tmp_path):
        rng = np.random.default_rng(4)
        seq = normalize_rows(rng.standard_normal((10, 8)))  # 1.8 s at 25fps/stride5
        store = sequence_store(tmp_path, seq)
        q = normalize_rows(rng.standard_normal((1, 8)))[0]
        res = temporal_search(q, q, PivotRef("v", 25), store)
        assert 0 <= res.f_s <= 25 <= res.f_e <= 45
        assert res.warning is not None  # shorter than the 2 s moment prior

    def test_uniform_video_tie_break(self, tmp_path):
        v = unit(1.0, 2.0, 3.0, 4.0)
        seq = np.stack([v] * 61)  # 12 s of identical content
        store = sequence_store(tmp_path, seq)
        res = temporal_search(v, v, PivotRef("v", 150), store)
        # all candidates tie -> earliest frame on each side, smallest window
        assert res.f_s == 0
        assert res.f_e == 150
        assert res.window_used_s == (10.0, 10.0)

    def test_boundaries_straddle_pivot_randomized(self, tmp_path):
        rng = np.random.default_rng(5)
        seq = normalize_rows(rng.standard_normal((301, 8)))
        store = sequence_store(tmp_path, seq)
        for _ in range(25):
            q1 = normalize_rows(rng.standard_normal((1, 8)))[0]
            q2 = normalize_rows(rng.standard_normal((1, 8)))[0]
            pivot = int(rng.integers(0, 1501))
            res = temporal_search(q1, q2, PivotRef("v", pivot), store)
            assert res.f_s <= pivot <= res.f_e
            assert res.t_s == res.f_s / 25.0 and res.t_e == res.f_e / 25.0

    def test_determinism(self, tmp_path):
        rng = np.random.default_rng(6)
        seq = normalize_rows(rng.standard_normal((100, 8)))
        store = sequence_store(tmp_path, seq)
        q1 = normalize_rows(rng.standard_normal((1, 8)))[0]
        q2 = normalize_rows(rng.standard_normal((1, 8)))[0]
        a = temporal_search(q1, q2, PivotRef("v", 200), store)
        b = temporal_search(q1, q2, PivotRef("v", 200), store)
        assert a.to_dict() == b.to_dict()

    def test_lambda_t_zero_reduction(self, tmp_path):
        rng = np.random.default_rng(7)
        seq = normalize_rows(rng.standard_normal((301, 8)))
        store = sequence_store(tmp_path, seq)
        q1 = normalize_rows(rng.standard_normal((1, 8)))[0]
        q2 = normalize_rows(rng.standard_normal((1, 8)))[0]
        params = TemporalSearchParams(lambda_s=1.0, lambda_t=0.0, windows_s=(10.0,))
        res = temporal_search(q1, q2, PivotRef("v", 750), store)
        del res
        res = temporal_search(q1, q2, PivotRef("v", 750), store, params)
        # pure-similarity argmax per directional range
        frames = store.get_frame_window("v", 750, 10.0)
        back = [(f, v) for f, v in frames if f <= 750]
        fwd = [(f, v) for f, v in frames if f >= 750]
        assert res.f_s == max(back, key=lambda fv: (float(np.dot(q1, fv[1])), -fv[0]))[0]
        assert res.f_e == max(fwd, key=lambda fv: (float(np.dot(q2, fv[1])), -fv[0]))[0]

    def test_window_monotonicity(self, tmp_path):
        rng = np.random.default_rng(8)
        seq = normalize_rows(rng.standard_normal((301, 8)))
        store = sequence_store(tmp_path, seq)
        q1 = normalize_rows(rng.standard_normal((1, 8)))[0]
        q2 = normalize_rows(rng.standard_normal((1, 8)))[0]
        prev = None
        for windows in [(10.0,), (10.0, 15.0), (10.0, 15.0, 20.0)]:
            res = temporal_search(
                q1, q2, PivotRef("v", 750), store,
                TemporalSearchParams(windows_s=windows),
            )
            if prev is not None:
                assert res.confidence_start >= prev.confidence_start - 1e-9
                assert res.confidence_end >= prev.confidence_end - 1e-9
            prev = res

    def test_pivot_out_of_range(self, tmp_path):
        rng = np.random.default_rng(9)
        seq = normalize_rows(rng.standard_normal((10, 4)))
        store = sequence_store(tmp_path, seq)
        q = normalize_rows(rng.standard_normal((1, 4)))[0]
        with pytest.raises(NotFoundError):
            temporal_search(q, q, PivotRef("v", 10_000), store)

    def test_missing_sequence_capability_error(self, tmp_path):
        store = load_corpus(make_corpus_dir(
            tmp_path,
            [{"video_id": "v", "fps": 25.0, "frame_count": 100,
              "keyframes": ([0], np.ones((1, 4)))}],
        ))
        q = unit(1, 0, 0, 0)
        with pytest.raises(CapabilityError):
            temporal_search(q, q, PivotRef("v", 50), store)


class TestParams:
    def test_lambda_normalization(self):
        p = TemporalSearchParams(lambda_s=2.0, lambda_t=2.0)
        assert p.lambda_s == pytest.approx(0.5)
        assert p.lambda_t == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(InputError):
            TemporalSearchParams(windows_s=())
        with pytest.raises(InputError):
            TemporalSearchParams(windows_s=(-5.0,))
        with pytest.raises(InputError):
            TemporalSearchParams(neighborhood_radius=0)


class TestSplitQuery:
    def test_hint(self):
        assert split_query("Begin with X. End with Y.", split_hint=13) == (
            "Begin with X.", "End with Y.",
        )

    def test_single_sentence_duplicates(self):
        assert split_query("just one sentence") == ("just one sentence", "just one sentence")

    def test_three_sentences_nearest_midpoint(self):
        text = "One fish. Two fish. Red fish blue fish."
        assert split_query(text) == ("One fish. Two fish.", "Red fish blue fish.")

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            split_query("   ")
