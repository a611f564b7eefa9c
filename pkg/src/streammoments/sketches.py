"""Building blocks used by the F_p pipeline.

* ``MisraGries``: deterministic frequent items with ceil(1/c) slots.
* ``L2HeavyHitters``: CountSketch with a candidate list, meeting the usual
  l2 heavy-hitter contract (every i with f_i^2 >= eps^2 F_2 is reported).
* ``BoundedCountSketch``: CountSketch whose cells saturate to an infinity
  marker once their mass needs more than B bits.
* ``TurnstileFp``: median estimator over p-stable projections with an
  optional cap on processed mass.
* ``query_frequency``: count one item over a fixed-length window.
"""

import math

import numpy as np
from scipy.stats import levy_stable

from .common import FAIL, derive_seed, width_bits
from .hashing import PairwiseHash, pair_key


def _group(items, weights=None):
    items = np.asarray(items, dtype=np.int64).reshape(-1)
    if weights is None:
        return np.unique(items, return_counts=True)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    keys, inv = np.unique(items, return_inverse=True)
    return keys, np.bincount(inv, weights=weights, minlength=keys.size)


class MisraGries:
    def __init__(self, c):
        if not (0 < c <= 1):
            raise ValueError("threshold c must lie in (0, 1]")
        self.c = c
        self.slots = math.ceil(1.0 / c - 1e-12)
        self.table = {}
        self.m = 0

    def update(self, a):
        a = int(a)
        self.m += 1
        t = self.table
        if a in t:
            t[a] += 1
        elif len(t) < self.slots:
            t[a] = 1
        else:
            for key in list(t):
                t[key] -= 1
                if t[key] == 0:
                    del t[key]

    def update_many(self, items):
        for a in np.asarray(items).reshape(-1).tolist():
            self.update(a)

    def query(self):
        return set(self.table)

    def bits(self, n):
        return self.slots * (width_bits(n) + width_bits(self.m)) + width_bits(self.m)


class L2HeavyHitters:
    """CountSketch plus a bounded candidate list.

    ``eps`` is the heaviness threshold; ``accuracy`` controls the width so the
    point estimates of reported items are within ``accuracy * f_i``.
    """

    def __init__(self, eps, delta, seed, accuracy=None, n=None):
        self.eps = float(eps)
        self.delta = float(delta)
        acc = self.eps if accuracy is None else float(accuracy)
        self.rows = max(1, math.ceil(math.log2(1.0 / delta)))
        self.rows += 1 - self.rows % 2
        self.width = max(4, math.ceil(3.0 / (self.eps ** 2 * acc ** 2)))
        self.table = np.zeros((self.rows, self.width), dtype=np.int64)
        self.hashes = [PairwiseHash(derive_seed(seed, j, 1)) for j in range(self.rows)]
        self.signs = [PairwiseHash(derive_seed(seed, j, 2)) for j in range(self.rows)]
        self.cap = math.ceil(4.0 / self.eps ** 2)
        self.cand = {}
        self.m = 0
        self.n = n

    def _cells(self, items):
        x = np.asarray(items, dtype=np.uint64)
        idx = [h.bucket(x, self.width) for h in self.hashes]
        sg = [s.sign(x) for s in self.signs]
        return idx, sg

    def estimate(self, items):
        items = np.asarray(items, dtype=np.int64).reshape(-1)
        if items.size == 0:
            return np.zeros(0)
        idx, sg = self._cells(items)
        est = np.stack([self.table[j, idx[j]] * sg[j] for j in range(self.rows)])
        return np.median(est, axis=0)

    def update(self, a, weight=1):
        self.update_many([a], [weight])

    def update_many(self, items, weights=None):
        keys, cnt = _group(items, weights)
        if keys.size == 0:
            return
        cnt = np.rint(cnt).astype(np.int64)
        idx, sg = self._cells(keys)
        for j in range(self.rows):
            np.add.at(self.table[j], idx[j], sg[j] * cnt)
        self.m += int(np.abs(cnt).sum())
        pool = np.unique(np.concatenate([keys, np.fromiter(self.cand, dtype=np.int64,
                                                          count=len(self.cand))]))
        est = self.estimate(pool)
        if pool.size > self.cap:
            keep = np.argsort(-np.abs(est), kind="stable")[:self.cap]
            pool, est = pool[keep], est[keep]
        self.cand = {int(i): float(e) for i, e in zip(pool, est)}

    def f2_estimate(self):
        return float(np.median(np.sum(self.table.astype(np.float64) ** 2, axis=1)))

    def query(self):
        """Set of (item, estimate) pairs for the heavy candidates."""
        if not self.cand:
            return set()
        thr = (self.eps ** 2) * self.f2_estimate() / 4.0
        return {(i, e) for i, e in self.cand.items() if e > 0 and e * e >= thr}

    def bits(self):
        w = width_bits(max(self.m, 1)) + 1
        ids = width_bits(self.n or (1 << 32))
        return self.rows * self.width * w + len(self.cand) * (ids + w) \
            + 4 * self.rows * 61


class BoundedCountSketch:
    """CountSketch with B-bit cells and a sticky infinity marker.

    Each cell keeps the signed sum and the absolute mass that reached it; a
    cell turns into infinity as soon as its mass exceeds 2^B - 1.  Because the
    mass only grows, the marker never clears.
    """

    def __init__(self, rows, width, cap_bits, seed):
        self.rows = int(rows) + (1 - int(rows) % 2)
        self.width = int(width)
        self.B = int(cap_bits)
        self.limit = (1 << self.B) - 1
        self.value = np.zeros((self.rows, self.width), dtype=np.int64)
        self.mass = np.zeros((self.rows, self.width), dtype=np.int64)
        self.inf = np.zeros((self.rows, self.width), dtype=bool)
        self.hashes = [PairwiseHash(derive_seed(seed, j, 3)) for j in range(self.rows)]
        self.signs = [PairwiseHash(derive_seed(seed, j, 4)) for j in range(self.rows)]

    @staticmethod
    def cap_for(n, eps):
        return math.ceil(math.log2(math.log2(n)) + math.log2(1.0 / eps)) + 4

    def update(self, a, w=1):
        self.update_many([a], [w])

    def locate(self, keys):
        """Bucket and sign of each key in every row, shape (rows, len(keys))."""
        x = np.asarray(keys, dtype=np.uint64).reshape(-1)
        idx = np.stack([h.bucket(x, self.width) for h in self.hashes])
        sg = np.stack([s.sign(x) for s in self.signs])
        return idx, sg

    def update_many(self, keys, weights=None):
        keys, w = _group(keys, weights)
        if keys.size == 0:
            return
        idx, sg = self.locate(keys)
        self.update_located(idx, sg, w)

    def update_located(self, idx, sg, weights):
        """Add weights to cells found earlier with ``locate``."""
        w = np.rint(np.asarray(weights, dtype=np.float64)).astype(np.int64)
        for j in range(self.rows):
            np.add.at(self.value[j], idx[j], sg[j] * w)
            np.add.at(self.mass[j], idx[j], np.abs(w))
        self.inf |= self.mass > self.limit
        self.value[self.inf] = 0
        self.mass[self.inf] = 0

    def query(self, a):
        return self.query_many([a])[0]

    def query_many(self, keys):
        x = np.asarray(keys, dtype=np.uint64).reshape(-1)
        ests = np.empty((self.rows, x.size))
        infs = np.empty((self.rows, x.size), dtype=bool)
        for j in range(self.rows):
            idx = self.hashes[j].bucket(x, self.width)
            infs[j] = self.inf[j, idx]
            ests[j] = self.value[j, idx] * self.signs[j].sign(x)
        out = np.empty(x.size)
        majority = infs.sum(axis=0) * 2 > self.rows
        for c in range(x.size):
            if majority[c]:
                out[c] = math.inf
            else:
                out[c] = float(np.median(ests[~infs[:, c], c]))
        return out

    def bits(self):
        return self.rows * self.width * (2 * self.B + 1) + 4 * self.rows * 61


_MEDIAN_ABS = {}


def stable_median_abs(p):
    """Median of |S| for a standard symmetric p-stable S."""
    if p not in _MEDIAN_ABS:
        _MEDIAN_ABS[p] = float(levy_stable.ppf(0.75, p, 0.0))
    return _MEDIAN_ABS[p]


def cms_stable(u1, u2, p):
    """Chambers-Mallows-Stuck transform of two uniforms in (0, 1] (symmetric)."""
    theta = math.pi * (np.asarray(u1) - 0.5)
    W = -np.log(np.asarray(u2))
    W = np.maximum(W, 1e-300)
    if p == 1.0:
        return np.tan(theta)
    return (np.sin(p * theta) / np.cos(theta) ** (1.0 / p)
            * (np.cos((1.0 - p) * theta) / W) ** ((1.0 - p) / p))


class TurnstileFp:
    """p-stable median sketch; ``cap`` bounds the processed mass (then Fail)."""

    def __init__(self, p, eps, delta, seed, n, cap=None, t=None):
        if not (0 < p < 2):
            raise ValueError("p must lie in (0, 2)")
        self.p = float(p)
        self.eps = float(eps)
        self.t = int(t) if t else math.ceil(8.0 * math.log(2.0 / delta) / eps ** 2)
        self.n = int(n)
        self.h1 = PairwiseHash(derive_seed(seed, 5))
        self.h2 = PairwiseHash(derive_seed(seed, 6))
        self.y = np.zeros(self.t)
        self.cap = cap
        self.mass = 0.0
        self.failed = False
        self._memo = None
        if self.n <= (1 << 16) and self.t * (self.n + 1) <= (1 << 23):
            self._memo = np.full((self.n + 1, self.t), np.nan)

    def variates(self, items):
        if self._memo is not None:
            items = np.asarray(items, dtype=np.int64).reshape(-1)
            rows = self._memo[items]
            miss = np.isnan(rows[:, 0])
            if miss.any():
                rows[miss] = self._variates(items[miss])
                self._memo[items[miss]] = rows[miss]
            return rows
        return self._variates(items)

    def _variates(self, items):
        # the memo above only caches this pure function of (seed, item)
        items = np.asarray(items, dtype=np.uint64).reshape(-1, 1)
        r = np.arange(1, self.t + 1, dtype=np.uint64).reshape(1, -1)
        keys = pair_key(items, r, self.n + 1)
        return cms_stable(self.h1.uniform(keys), self.h2.uniform(keys), self.p)

    def update(self, a, w=1.0):
        self.update_many([a], [w])

    def update_many(self, items, weights=None):
        if self.failed:
            return
        keys, w = _group(items, weights)
        if keys.size == 0:
            return
        w = np.asarray(w, dtype=np.float64)
        mass = float(np.abs(w).sum())
        if self.cap is not None and self.mass + mass > self.cap:
            self.failed = True
            self.y[:] = 0.0
            return
        self.mass += mass
        # bound the (keys x t) variate block to a few MB
        step = max(1, (1 << 19) // self.t)
        for lo in range(0, keys.size, step):
            self.y += w[lo:lo + step] @ self.variates(keys[lo:lo + step])

    def query(self):
        if self.failed:
            return FAIL
        if self.mass == 0:
            return 0.0
        med = float(np.median(np.abs(self.y)))
        return (med / stable_median_abs(self.p)) ** self.p

    def bits(self):
        return self.t * 64 + 2 * 2 * 61 + 64


def query_frequency(item, m_hat, cursor):
    """Count ``item`` over the next m_hat updates; 0 when fewer remain.

    Consumes exactly min(m_hat, remaining) positions.  The caller rescales
    the raw count by (stream length) / m_hat.
    """
    m_hat = int(m_hat)
    short = cursor.remaining < m_hat
    window = cursor.take(m_hat)
    if short:
        return 0
    return int(np.count_nonzero(window == item))
