import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streammoments.hashing import (MERSENNE_61, LevelParams, PairwiseHash,
                                   PInverseSampler, default_k, dequantize,
                                   level_of, mulmod61, p_inverse_from_uniform,
                                   quantile_estimate, quantize, st_expand)

below_p = st.integers(0, MERSENNE_61 - 1)


@given(st.lists(st.tuples(below_p, below_p), min_size=1, max_size=20))
def test_mulmod_matches_python_ints(pairs):
    a = np.array([x for x, _ in pairs], dtype=np.uint64)
    b = np.array([y for _, y in pairs], dtype=np.uint64)
    want = [(x * y) % MERSENNE_61 for x, y in pairs]
    assert mulmod61(a, b).tolist() == want


@given(st.integers(0, 2 ** 40), st.lists(st.integers(0, 2 ** 63), min_size=1, max_size=20))
def test_vector_hash_matches_scalar_reference(seed, xs):
    h = PairwiseHash(seed)
    got = h(np.array(xs, dtype=np.uint64)).tolist()
    assert got == [h.hash_int(x) for x in xs]


def test_uniform_is_in_unit_interval_and_never_zero():
    h = PairwiseHash(1)
    u = h.uniform(np.arange(100_000, dtype=np.uint64))
    assert u.min() > 0 and u.max() <= 1
    assert abs(u.mean() - 0.5) < 0.01


def test_pairwise_collisions_are_rare():
    # over random seeds, two fixed keys share a bucket about 1/size of the time
    hits = sum(PairwiseHash(s).bucket(np.array([3, 17], dtype=np.uint64), 8)
               .tolist().count(PairwiseHash(s).bucket(np.array([3], dtype=np.uint64), 8)[0]) == 2
               for s in range(4000))
    assert abs(hits / 4000 - 1 / 8) < 0.03


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
def test_p_inverse_tail_exact_on_a_grid(p):
    # u on a fine uniform grid: the fraction with X >= x is x^-p up to the grid step
    u = (np.arange(1, 200_001) - 0.5) / 200_000
    X = p_inverse_from_uniform(u, p)
    assert X.min() >= 1
    for x in (1, 2, 3, 5, 10):
        assert np.mean(X >= x) == pytest.approx(x ** -p, abs=1e-4)


def test_sampler_matrix_agrees_with_pointwise_calls():
    s = PInverseSampler(1.5, 6, seed=2, N=50)
    M = s.matrix([4, 9])
    assert np.array_equal(M[0], s.row(4))
    assert M[1, 3] == s(9, 4)
    with pytest.raises(ValueError):
        s(1, 7)
    assert [w for _, w in st_expand(s, 4)] == M[0].tolist()


@given(st.lists(st.floats(0, 1e6), max_size=40), st.integers(1, 30))
def test_quantile_estimate_is_half_k_largest(values, half):
    k = 2 * half
    padded = sorted(values + [0.0] * max(0, k - len(values)), reverse=True)
    assert quantile_estimate(values, k) == padded[half - 1]


def test_quantile_rejects_odd_k():
    with pytest.raises(ValueError):
        quantile_estimate([1.0], 3)


def test_default_k_even_and_large_enough():
    for p in (0.5, 1.0, 1.5):
        for eps in (0.1, 0.25):
            k = default_k(p, eps)
            assert k % 2 == 0 and k >= 160 / (p * p * eps * eps)


def test_levels_partition_scalings():
    params = LevelParams(C=4, L=100, p=1.0, w0=3)
    X = np.array([400.0, 1000.0, 399.0, 201.0, 200.0, 1.0])
    w = level_of(params, X)
    assert w[0] == 0 and w[1] == 0
    assert w[2] == 1 and w[3] == 1 and w[4] == 2
    for xv, wv in zip(X, w):
        if wv > 0:
            assert params.CL / 2 ** (wv / params.p) < xv <= params.CL / 2 ** ((wv - 1) / params.p)


def test_quantize_roundtrip_within_one_bin():
    v = np.array([1.0, 7.5, 1e5])
    back = dequantize(quantize(v, 0.1), 0.1)
    assert np.all(back <= v) and np.all(v < back * 1.1 + 1e-9)
