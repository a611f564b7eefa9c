import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streammoments.stream import (Cursor, GeneratorSpec, Stream, distinct_bracket,
                                  exact_moment, generate, subsample_band, make_rng,
                                  moment_of_counts, planted_mixture_counts,
                                  read_stream, shuffle, stream_from_counts,
                                  subsample_positions, write_binary, write_text,
                                  zipf_counts)

small_streams = st.lists(st.integers(1, 20), min_size=0, max_size=60)


def brute_moment(items, p):
    return sum(c ** p for c in Counter(items).values())


def test_rejects_ids_outside_universe():
    with pytest.raises(ValueError):
        Stream([0, 1], 5)
    with pytest.raises(ValueError):
        Stream([6], 5)


@given(small_streams, st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0]))
def test_exact_moment_matches_counter(items, p):
    s = Stream(items, 20)
    assert exact_moment(s, p) == pytest.approx(brute_moment(items, p))


def test_moment_conventions():
    s = Stream([1, 1, 2, 3, 3, 3], 3)
    assert exact_moment(s, 0) == 3
    assert exact_moment(s, 1) == 6
    assert exact_moment(s, 2) == 4 + 1 + 9
    assert moment_of_counts([], 1.5) == 0


@given(small_streams, st.integers(0, 2 ** 32))
def test_shuffle_keeps_multiset_and_is_reproducible(items, seed):
    s = Stream(items, 20)
    a, b = shuffle(s, seed), shuffle(s, seed)
    assert a == b
    assert sorted(a.updates.tolist()) == sorted(items)


def test_shuffle_is_roughly_uniform_on_three_items():
    s = Stream([1, 2, 3], 3)
    seen = Counter(tuple(shuffle(s, seed).updates.tolist()) for seed in range(6000))
    assert len(seen) == 6
    assert all(abs(c - 1000) < 150 for c in seen.values())


@given(st.integers(1, 300), st.integers(1, 5000), st.floats(0.0, 2.5))
def test_zipf_counts_sum_and_monotone(n, m, skew):
    c = zipf_counts(n, m, skew)
    assert c.sum() == m
    assert np.all(np.diff(c) <= 0)


def test_planted_mixture_hits_share():
    for p in (0.5, 1.5):
        c = planted_mixture_counts(1024, 1_000_000, p, 0.3)
        assert c.sum() == 1_000_000
        share = c[0] ** p / moment_of_counts(c, p)
        assert abs(share - 0.3) < 0.01


def test_planted_heavy_generator_checks_total():
    with pytest.raises(ValueError):
        generate(GeneratorSpec("planted-heavy", 10, 100, heavy_freq=50, background=10))
    s = generate(GeneratorSpec("planted-heavy", 100, 100, heavy_freq=50, background=50))
    assert s.counts()[1] == 50


@settings(max_examples=30)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=50))
def test_file_roundtrip(tmp_path_factory, items):
    d = tmp_path_factory.mktemp("io")
    s = Stream(items, 1000)
    write_text(s, d / "s.txt")
    write_binary(s, d / "s.bin")
    assert np.array_equal(read_stream(d / "s.txt").updates, s.updates)
    back = read_stream(d / "s.bin")
    assert back == s


def test_binary_header_layout(tmp_path):
    s = Stream([3, 1, 2], 7)
    write_binary(s, tmp_path / "s.bin")
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:6] == b"RSTRM1" and len(raw) == 16 + 3 * 8
    assert int.from_bytes(raw[8:16], "little") == 7


def test_cursor_hands_out_each_position_once():
    s = Stream(np.arange(1, 101), 100)
    c = Cursor(s)
    got = np.concatenate([c.take(30), c.take(50), c.take(50)])
    assert np.array_equal(got, s.updates)
    assert c.exhausted() and c.take(5).size == 0


def test_slice_and_induce():
    s = Stream([1, 2, 3, 1, 2, 3], 3)
    assert s.slice(2, 4).to_stream().updates.tolist() == [2, 3, 1]
    assert s.induce({1, 3}).updates.tolist() == [1, 3, 1, 3]
    with pytest.raises(ValueError):
        s.slice(0, 2)


def test_distinct_bracket_contains_expectation():
    counts = zipf_counts(50, 2000, 1.0)
    arr = stream_from_counts(counts, 50).updates
    rng = make_rng(3)
    k = 200
    mean = np.mean([np.unique(arr[subsample_positions(arr.size, k, rng)]).size
                    for _ in range(3000)])
    lo, hi = distinct_bracket(counts, arr.size, k)
    assert lo <= hi
    assert lo - 0.3 <= mean <= hi + 0.3


def test_subsample_band_shrinks_with_k():
    assert subsample_band(100, 10_000, 4000, 0.1) < subsample_band(100, 10_000, 1000, 0.1)
    assert subsample_band(100, 10_000, 1000, 0.01) > subsample_band(100, 10_000, 1000, 0.1)
