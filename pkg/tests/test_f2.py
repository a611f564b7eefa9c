import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streammoments.f2 import (InsufficientData, RandF2, block_pairs,
                              choose_block_size, estimate_f2)
from streammoments.stream import Stream, exact_moment, shuffle


def brute_pairs(block):
    return sum(1 for i, j in itertools.combinations(range(len(block)), 2)
               if block[i] == block[j])


@given(st.lists(st.integers(1, 6), max_size=30))
def test_block_pairs_matches_pair_enumeration(block):
    assert block_pairs(block) == brute_pairs(block)


@settings(max_examples=60)
@given(st.lists(st.integers(1, 8), min_size=0, max_size=200), st.integers(2, 17),
       st.integers(0, 50))
def test_batched_updates_equal_sequential(items, b, split):
    a, c = RandF2(b, 8), RandF2(b, 8)
    for x in items:
        a.update(x)
    c.update_many(items[:split])
    c.update_many(items[split:])
    assert (a.K, a.T, a.m1) == (c.K, c.T, c.m1)


def test_all_equal_and_all_distinct_are_exact():
    b = choose_block_size(0.1, 0.1, 5000)
    same = Stream(np.full(3000, 9), 5000)
    diff = Stream(np.arange(1, 3001), 5000)
    for s in (same, diff):
        est = RandF2(b, s.n)
        est.update_many(s.updates)
        assert est.finalize() == exact_moment(s, 2)


def test_relabelling_does_not_change_the_estimate():
    rng = np.random.default_rng(0)
    s = Stream(rng.integers(1, 30, size=2000), 30)
    perm = rng.permutation(30) + 1
    relabelled = Stream(perm[s.updates.astype(np.int64) - 1], 30)
    assert estimate_f2(s, 0.2, 0.1) == estimate_f2(relabelled, 0.2, 0.1)


def test_trailing_partial_block_is_dropped():
    est = RandF2(4, 10)
    est.update_many([1, 1, 2, 3, 5, 5, 5])
    assert est.T == 1 and est.K == 1
    assert len(est.buffer) == 3


def test_needs_a_complete_block():
    est = RandF2(10, 10)
    est.update_many([1, 2, 3])
    with pytest.raises(InsufficientData):
        est.finalize()


def test_mean_close_to_f2_on_small_stream():
    counts = np.array([40, 20, 10, 5, 5, 5, 5, 5, 5])
    s = Stream(np.repeat(np.arange(1, 10), counts), 9)
    F2 = exact_moment(s, 2)
    ys = []
    for seed in range(3000):
        est = RandF2(8, 9)
        est.update_many(shuffle(s, seed).updates)
        ys.append(est.finalize())
    sigma = np.std(ys) / math.sqrt(len(ys))
    assert abs(np.mean(ys) - F2) < 4 * sigma


def test_block_size_rule_and_bits():
    assert choose_block_size(0.1, 0.1, 100) >= 2
    with pytest.raises(ValueError):
        choose_block_size(0, 0.1, 100)
    b = choose_block_size(0.1, 0.1, 1024)
    assert RandF2(b, 1024).bits() <= 1.5 * 2 * b * math.log2(1024)
