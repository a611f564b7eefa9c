import math

import numpy as np
import pytest

from streammoments.common import FAIL
from streammoments.fp import (HHR, FpConfig, RndFp, hhr_run, hhr_trunk_length,
                              w0_for_budget, window_length)
from streammoments.stream import (Cursor, Stream, exact_moment,
                                  planted_mixture_counts, shuffle,
                                  stream_from_counts)


def mixture(p, m=200_000, share=0.3, seed=0):
    return stream_from_counts(planted_mixture_counts(1024, m, p, share), 1024, seed)


def test_calibrated_config_values():
    c = FpConfig.calibrated(1.5, 0.25)
    assert c.k == 512 and c.k % 2 == 0
    assert FpConfig.calibrated(0.5, 0.25, k=100).k == 100
    inner = c.inner()
    assert inner.eps == pytest.approx(0.25 / 3) and inner.w0 is not None


@pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
def test_w0_budget_rule(p):
    w0 = w0_for_budget(p, 16.0, 0.25)
    r = 2.0 ** (-1.0 / p)
    assert 3 * 16 * r ** (w0 + 1) / (1 - r) <= 0.25
    if w0 > 0:
        assert 3 * 16 * r ** w0 / (1 - r) > 0.25


def test_window_length_decreases_with_level():
    assert window_length(16, 10_000, 5, 1.0) > window_length(16, 10_000, 6, 1.0) >= 1


def test_hhr_trunk_length_floor():
    assert hhr_trunk_length(1000, 1000.0, 1.0, 1024, 3) == 1000
    assert hhr_trunk_length(10_000, 1.0, 1.0, 1024, 0) == 10 ** 8


def test_hhr_fails_on_short_stream_and_recovers_planted_item():
    counts = planted_mixture_counts(256, 100_000, 1.0, 0.6)
    base = stream_from_counts(counts, 256)
    F = exact_moment(base, 1.0)
    h = HHR(1.0, 0.5, 100_000, F, 256, c1=1.0, c3=0.0)
    short = Stream(np.ones(h.t * h.m1 - 1, dtype=np.uint64), 256)
    assert hhr_run(1.0, 0.5, 100_000, F, Cursor(short), 256, c1=1.0, c3=0.0) is FAIL
    out = hhr_run(1.0, 0.5, 100_000, F, Cursor(shuffle(base, 3)), 256, seed=1,
                  c1=1.0, c3=0.0)
    assert 1 in out


def test_hhr_leaves_surplus_unread():
    h = HHR(1.0, 0.5, 1000, 1000.0, 64, c1=1.0, c3=0.0)
    need = h.t * h.m1
    used = h.update_many(np.ones(need + 50, dtype=np.int64))
    assert used == need == h.consumed and h.done


def test_p_equal_one_returns_length():
    s = mixture(1.0, m=5000)
    assert RndFp(1.0, 0.25, 0.1, 1024).run(s) == 5000


def test_same_seed_same_estimate():
    s = mixture(0.5, m=50_000)
    cfg = FpConfig.calibrated(0.5, 0.25)
    a = RndFp(0.5, 0.25, 0.1, 1024, seed=4, config=cfg).run(s)
    b = RndFp(0.5, 0.25, 0.1, 1024, seed=4, config=cfg).run(s)
    assert a == b


@pytest.mark.parametrize("p", [0.5, 1.5])
def test_estimate_within_tolerance_on_mixture(p):
    s = mixture(p, m=300_000, seed=11)
    exact = exact_moment(s, p)
    cfg = FpConfig.calibrated(p, 0.25)
    tol = p * 0.25 * 1.25
    ok = 0
    for seed in range(3):
        est = RndFp(p, 0.25, 0.1, 1024, seed=seed, config=cfg).run(shuffle(s, seed))
        ok += abs(est - exact) / exact <= tol
    assert ok >= 2


def test_small_stream_uses_turnstile_path():
    s = Stream(np.repeat(np.arange(1, 11), 20), 10)
    est = RndFp(1.5, 0.25, 0.1, 10, seed=1, config=FpConfig.calibrated(1.5, 0.25, n=10)).run(s)
    exact = exact_moment(s, 1.5)
    assert abs(est - exact) / exact < 0.5


def test_bits_are_tracked():
    s = mixture(0.5, m=100_000)
    r = RndFp(0.5, 0.25, 0.1, 1024, seed=0, config=FpConfig.calibrated(0.5, 0.25))
    r.run(s)
    assert r.peak_bits >= r.bits() > 0
