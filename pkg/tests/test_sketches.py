import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streammoments.acceptance import bcs_monotone_violations, misra_gries_violations
from streammoments.common import FAIL
from streammoments.sketches import (BoundedCountSketch, L2HeavyHitters,
                                    MisraGries, TurnstileFp, query_frequency,
                                    stable_median_abs)
from streammoments.stream import Cursor, Stream


def test_misra_gries_exhaustive_small():
    assert misra_gries_violations(max_len=5, items=3) == 0


@given(st.lists(st.integers(1, 10), max_size=200), st.sampled_from([0.5, 0.25, 0.1]))
def test_misra_gries_error_bound(items, c):
    mg = MisraGries(c)
    mg.update_many(items)
    m = len(items)
    assert len(mg.table) <= mg.slots
    for i in range(1, 11):
        f = items.count(i)
        assert f - m / (mg.slots + 1) <= mg.table.get(i, 0) <= f


def test_misra_gries_rejects_bad_threshold():
    with pytest.raises(ValueError):
        MisraGries(0)


def test_bcs_infinity_monotone_exhaustive():
    assert bcs_monotone_violations(max_len=3, keys=3) == 0


@settings(max_examples=40)
@given(st.lists(st.integers(1, 50), max_size=80), st.integers(0, 1000))
def test_bcs_batch_equals_sequential(items, seed):
    a = BoundedCountSketch(3, 8, 3, seed)
    b = BoundedCountSketch(3, 8, 3, seed)
    for x in items:
        a.update(x)
    b.update_many(items)
    # cells that never overflowed hold the same sums either way
    assert np.array_equal(a.inf, b.inf)
    assert np.array_equal(a.value, b.value)


def test_bcs_exact_without_collisions():
    cs = BoundedCountSketch(5, 4096, 20, seed=3)
    cs.update_many([7] * 12 + [9] * 3)
    assert cs.query(7) == 12 and cs.query(9) == 3
    tiny = BoundedCountSketch(3, 4, 2, seed=3)
    tiny.update_many([7] * 10)
    assert tiny.query(7) == float("inf")


def test_l2_heavy_hitter_finds_planted_item():
    rng = np.random.default_rng(1)
    s = np.concatenate([rng.integers(2, 2000, size=20_000), np.ones(3000, dtype=np.int64)])
    rng.shuffle(s)
    hh = L2HeavyHitters(0.25, 0.05, seed=4, n=2000)
    hh.update_many(s)
    got = dict(hh.query())
    assert 1 in got
    assert abs(got[1] - 3000) <= 0.25 * 3000


def test_turnstile_single_item_and_cap():
    sk = TurnstileFp(1.5, 0.2, 0.05, seed=2, n=100)
    sk.update_many([3, 3], [100, 100])
    assert abs(sk.query() / 200 ** 1.5 - 1) < 0.2
    capped = TurnstileFp(1.0, 0.2, 0.05, seed=2, n=100, cap=10)
    capped.update_many([1] * 11)
    assert capped.query() is FAIL


def test_turnstile_is_linear():
    a = TurnstileFp(0.5, 0.3, 0.1, seed=5, n=50)
    b = TurnstileFp(0.5, 0.3, 0.1, seed=5, n=50)
    a.update_many([1, 2, 3], [5, -2, 4])
    b.update_many([3, 1], [4, 5])
    b.update(2, -2)
    assert np.allclose(a.y, b.y)


def test_stable_median_is_known_for_cauchy():
    # |Cauchy| has median tan(pi/4) = 1
    assert stable_median_abs(1.0) == pytest.approx(1.0, rel=1e-3)


def test_query_frequency_window():
    s = Stream([1, 2, 1, 1, 3, 1], 3)
    c = Cursor(s)
    assert query_frequency(1, 4, c) == 3
    assert c.pos == 4
    assert query_frequency(1, 5, c) == 0
    assert c.exhausted()
