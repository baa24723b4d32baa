import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointmatch.similarity import (
    QueryPack,
    SimilarityParams,
    combined_similarity,
    combined_similarity_batch,
    cosine,
    normalized_mutual_information,
)

from .oracles import brute_combined, brute_cosine, brute_nmi

PARAMS = SimilarityParams()


def rand_vec(rng, n=2000, lo=0.0, hi=4096.0):
    return rng.uniform(lo, hi, size=n)


class TestCosine:
    def test_self_is_exactly_one(self):
        rng = np.random.default_rng(0)
        v = rand_vec(rng)
        assert cosine(v, v) == 1.0

    def test_opposite_is_exactly_minus_one(self):
        rng = np.random.default_rng(1)
        v = rand_vec(rng) + 1.0
        assert cosine(v, -v) == -1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_zero_vector_scores_zero(self):
        assert cosine([0.0, 0.0, 0.0], [1.0, 2.0, 3.0]) == 0.0

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            cosine([1.0, 2.0], [1.0])

    def test_power_of_two_scaling_exact(self):
        rng = np.random.default_rng(2)
        a, b = rand_vec(rng, 500), rand_vec(rng, 500)
        assert cosine(2.0 * a, 2.0 * b) == cosine(a, b)
        assert cosine(0.5 * a, 0.5 * b) == cosine(a, b)


class TestNMI:
    def test_self_is_one(self):
        rng = np.random.default_rng(3)
        v = rand_vec(rng)
        assert normalized_mutual_information(v, v, PARAMS) == 1.0

    def test_both_constant_is_zero(self):
        v = np.full(100, 1234.0)
        assert normalized_mutual_information(v, v, PARAMS) == 0.0

    def test_independent_uniform_below_point_one(self):
        rng = np.random.default_rng(4)
        a, b = rand_vec(rng, 2000), rand_vec(rng, 2000)
        nmi = normalized_mutual_information(a, b, PARAMS)
        assert nmi < 0.1
        assert nmi == pytest.approx(brute_nmi(a, b), abs=1e-12)

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            normalized_mutual_information(np.ones(8), np.ones(8), PARAMS)

    def test_bin_aligned_shift_invariance(self):
        # values centered inside bins; a one-bin shift permutes bins bijectively
        rng = np.random.default_rng(5)
        bins = rng.integers(0, 15, size=3000)
        a = bins * 256.0 + 128.0
        assert normalized_mutual_information(a, a + 256.0, PARAMS) == pytest.approx(1.0, abs=1e-12)


class TestCombined:
    def test_self_is_exactly_one(self):
        rng = np.random.default_rng(6)
        v = rand_vec(rng)
        assert combined_similarity(v, v, PARAMS) == 1.0

    def test_opposite_clamps_to_zero(self):
        rng = np.random.default_rng(7)
        v = rand_vec(rng) + 1.0
        # negative cosine is clamped, so the product is 0 regardless of NMI
        assert combined_similarity(v, -v, PARAMS) == 0.0

    def test_noise_beats_shuffle(self):
        rng = np.random.default_rng(8)
        v = rand_vec(rng, 1862)
        noisy = np.clip(v + rng.normal(0, 20.0, v.shape), 0, 4096)
        shuffled = rng.permutation(v)
        assert combined_similarity(v, noisy, PARAMS) > combined_similarity(v, shuffled, PARAMS)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            a, b = rand_vec(rng, 300), rand_vec(rng, 300)
            assert combined_similarity(a, b, PARAMS) == pytest.approx(
                brute_combined(a, b), abs=1e-9
            )
            assert cosine(a, b) == pytest.approx(brute_cosine(a, b), abs=1e-9)

    def test_mean_combine_mode(self):
        params = SimilarityParams(combine="mean")
        rng = np.random.default_rng(10)
        a, b = rand_vec(rng, 400), rand_vec(rng, 400)
        expected = 0.5 * (max(brute_cosine(a, b), 0.0) + brute_nmi(a, b))
        assert combined_similarity(a, b, params) == pytest.approx(expected, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=4096), min_size=16, max_size=64),
    st.lists(st.integers(min_value=0, max_value=4096), min_size=16, max_size=64),
)
def test_symmetry_and_range(xs, ys):
    n = min(len(xs), len(ys))
    a = np.array(xs[:n], dtype=np.float64)
    b = np.array(ys[:n], dtype=np.float64)
    s_ab = combined_similarity(a, b, PARAMS)
    s_ba = combined_similarity(b, a, PARAMS)
    assert s_ab == s_ba
    assert 0.0 <= s_ab <= 1.0


class TestBatchKernel:
    def test_batch_agrees_with_scalar(self):
        rng = np.random.default_rng(11)
        queries = rng.uniform(0, 4096, size=(3, 200)).astype(np.float32)
        cands = rng.uniform(0, 4096, size=(17, 200)).astype(np.float32)
        got = combined_similarity_batch(queries, cands, PARAMS)
        for qi in range(3):
            for ci in range(17):
                want = combined_similarity(queries[qi], cands[ci], PARAMS)
                assert got[qi, ci] == pytest.approx(want, abs=1e-12)

    def test_identical_descriptor_scores_exactly_one(self):
        rng = np.random.default_rng(12)
        v = rng.uniform(0, 4096, size=(1, 500)).astype(np.float32)
        assert combined_similarity_batch(v, v, PARAMS)[0, 0] == 1.0

    def test_query_pack_reuse(self):
        rng = np.random.default_rng(13)
        q = rng.uniform(0, 4096, size=(2, 128)).astype(np.float32)
        c = rng.uniform(0, 4096, size=(5, 128)).astype(np.float32)
        pack = QueryPack(q, PARAMS)
        assert np.array_equal(
            combined_similarity_batch(pack, c, PARAMS), combined_similarity_batch(q, c, PARAMS)
        )

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            combined_similarity_batch(np.ones((1, 32)), np.ones((1, 33)))
