"""F_p estimation for 0 < p < 2 over random-order streams.

Layout, bottom up:

* ``HHR``: heavy hitters from a short prefix, trunk by trunk, with a
  Misra-Gries vote across trunks.
* ``SmallApprox``: a capped turnstile sketch; answers short streams.
* ``SmallCont``: scaled pairs with large scalings (levels 0..w0).
* ``LargeContWithLength`` / ``LargeCont``: scaled pairs in levels above w0,
  found level by level inside short windows of the stream.
* ``C2Fp``: combines the three and applies the quantile rule.
* ``RndFp``: rotating C2Fp instances plus a median over parallel copies.

Streams are pushed in numpy chunks.  Every structure consumes each position at
most once and in order; chunking only batches the arithmetic.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .common import FAIL, derive_seed, is_fail, width_bits
from .hashing import (LevelParams, PairwiseHash, PInverseSampler, default_k,
                      dequantize, level_of, quantile_estimate, quantize)
from .sketches import (BoundedCountSketch, L2HeavyHitters, MisraGries,
                       TurnstileFp)
from .stream import Cursor

CHUNK = 1 << 16


# ------------------------------------------------------------------ config

@dataclass
class FpConfig:
    """Named constants of the pipeline.  ``None`` means "use the default rule"."""

    p: float
    eps: float
    delta: float = 0.1
    n: int = 1024
    k: int = None
    C: float = None              # level scale: L is trusted within a factor C
    rot: float = None            # growth factor between rotating C2Fp instances
    d0: float = 4.0
    w0: int = None
    window_budget: float = None  # pick w0 so level windows use <= this share of m_hat
    z_mult: float = None         # z_w = z_mult * m_hat / 2^(w/p)
    gamma: int = None            # buckets per level
    c0: float = 0.5
    c1: float = 4.0
    c2: float = None
    c3: float = 3.0
    small_cap: int = None        # SmallApprox mass cap
    hh_quota: int = None         # SmallCont per-(w, r) length quota
    cs_width: int = None         # SmallCont CountSketch width
    copies: int = None
    const_eps: float = 0.5
    inner_div: float = 3.0       # RndFp runs C2Fp at eps / inner_div

    def resolved(self):
        """Copy with every default filled in for this config's own eps."""
        c = replace(self)
        logn = math.log2(max(c.n, 2))
        if c.k is None:
            c.k = default_k(c.p, c.eps)
        if c.C is None:
            c.C = max(16.0, math.log2(c.n / c.delta) ** 2 / c.eps ** 2)
        if c.rot is None:
            c.rot = c.C
        if c.z_mult is None:
            c.z_mult = 16.0 * c.C / c.eps ** 2
        if c.w0 is None:
            if c.window_budget is not None:
                c.w0 = w0_for_budget(c.p, c.z_mult, c.window_budget)
            else:
                c.w0 = math.ceil(c.d0 * (math.log2(logn) + math.log2(1.0 / c.eps)))
        if c.gamma is None:
            c.gamma = c.k
        if c.c2 is None:
            c.c2 = c.c0 / 2.0
        if c.small_cap is None:
            c.small_cap = max(int(c.rot ** 2), math.ceil(logn ** 2 / c.eps ** 2))
        if c.hh_quota is None:
            w0 = max(c.w0, 2)
            c.hh_quota = math.ceil(4 * w0 * math.log2(w0)
                                   * (math.log2(logn) + math.log2(1.0 / c.eps)))
        if c.cs_width is None:
            c.cs_width = math.ceil(3.0 / c.eps ** 2)
        if c.copies is None:
            c.copies = math.ceil(6 * math.log2(1.0 / c.delta))
        return c

    @classmethod
    def calibrated(cls, p, eps, delta=0.1, n=1024, **overrides):
        """Small constants that keep one pass over 10^6 updates to a few seconds.

        The asymptotic default rules give k, C and the copy count in the
        thousands at laptop scale; these values were tuned on planted
        mixtures with n = 1024 and m = 10^6 and hold the accuracy target there.
        """
        k = math.ceil(32.0 / eps ** 2 - 1e-9)
        base = dict(p=p, eps=eps, delta=delta, n=n, k=k + k % 2, rot=32.0, C=64.0,
                    z_mult=16.0, window_budget=0.25, c1=0.5, c3=0.0, copies=1,
                    inner_div=3.0, cs_width=math.ceil(3.0 / eps ** 2),
                    small_cap=1024)
        base.update(overrides)
        return cls(**base)

    def inner(self):
        """Config handed to the C2Fp instances (eps divided, defaults filled)."""
        return replace(self, eps=self.eps / self.inner_div).resolved()


def w0_for_budget(p, z_mult, budget):
    """Smallest w0 with 3 * sum_{w > w0} z_mult 2^(-w/p) <= budget."""
    ratio = 2.0 ** (-1.0 / p)
    w0 = 0
    while 3.0 * z_mult * ratio ** (w0 + 1) / (1.0 - ratio) > budget:
        w0 += 1
    return w0


def window_length(z_mult, m_hat, w, p):
    return max(1, math.ceil(z_mult * m_hat / 2.0 ** (w / p)))


# ------------------------------------------------------------ batch helper

class Batch:
    """One chunk of updates with its item histogram computed once."""

    def __init__(self, arr):
        self.arr = np.asarray(arr).astype(np.int64, copy=False)
        self._hist = None

    @property
    def size(self):
        return int(self.arr.size)

    def hist(self):
        if self._hist is None:
            self._hist = np.unique(self.arr, return_counts=True)
        return self._hist

    def part(self, lo, hi):
        return Batch(self.arr[lo:hi])


def as_batch(x):
    return x if isinstance(x, Batch) else Batch(x)


# ---------------------------------------------------- heavy hitter (HHR)

class ExactHeavyHitters:
    """Heavy-hitter contract met by an exact tally of a short trunk."""

    def __init__(self, eps, n=None):
        self.eps = eps
        self.n = n
        self.counts = {}
        self.m = 0

    def update_many(self, items, weights=None):
        keys, cnt = np.unique(np.asarray(items, dtype=np.int64), return_counts=True)
        for a, c in zip(keys.tolist(), cnt.tolist()):
            self.counts[a] = self.counts.get(a, 0) + c
        self.m += int(cnt.sum())

    def query(self):
        f2 = sum(c * c for c in self.counts.values())
        thr = self.eps ** 2 * f2
        return {(a, float(c)) for a, c in self.counts.items() if c * c >= thr}

    def bits(self):
        return len(self.counts) * (width_bits(self.n or 1 << 32) + width_bits(self.m))


def hhr_trunk_length(m_hat, F, p, n, c3):
    floor = math.log2(max(n, 2)) ** c3
    m1 = m_hat ** 2 / F ** (2.0 / p) if F > 0 else float("inf")
    return max(1, math.ceil(max(m1, floor)))


class HHR:
    """Heavy hitters from t trunks of m1 updates each, voted by Misra-Gries.

    ``update_many`` may be fed more updates than needed; the surplus is left
    unread (``consumed`` reports how many positions were used).
    """

    def __init__(self, p, c0, m_hat, F, n, seed=0, c1=4.0, c2=None, c3=3.0,
                 hh="countsketch"):
        self.p = p
        self.n = n
        self.c2 = c0 / 2.0 if c2 is None else c2
        self.m1 = hhr_trunk_length(m_hat, F, p, n, c3)
        self.t = max(1, math.ceil(c1 * math.log2(max(n, 2))))
        self.mg = MisraGries(self.c2)
        self.hh_kind = hh
        self.seed = seed
        self.trunk = 0
        self.filled = 0
        self.consumed = 0
        self.cur = self._new_hh()
        self.peak_bits = 0

    def _new_hh(self):
        if self.hh_kind == "exact":
            return ExactHeavyHitters(self.c2, self.n)
        return L2HeavyHitters(self.c2, 0.01, derive_seed(self.seed, self.trunk),
                              accuracy=0.5, n=self.n)

    @property
    def done(self):
        return self.trunk >= self.t

    def update_many(self, items):
        items = np.asarray(items)
        pos = 0
        while pos < items.size and not self.done:
            piece = items[pos:pos + self.m1 - self.filled]
            pos += piece.size
            self.cur.update_many(piece)
            self.filled += piece.size
            self.consumed += piece.size
            if self.filled == self.m1:
                self.peak_bits = max(self.peak_bits, self.bits())
                for a in sorted(i for i, _ in self.cur.query()):
                    self.mg.update(a)
                self.trunk += 1
                self.filled = 0
                if not self.done:
                    self.cur = self._new_hh()
        return pos

    def run(self, cursor):
        while not self.done and not cursor.exhausted():
            self.update_many(cursor.take(min(CHUNK, self.m1 * (self.t - self.trunk))))
        return self.query()

    def query(self):
        return self.mg.query() if self.done else FAIL

    def bits(self):
        return self.mg.bits(self.n) + self.cur.bits() + 3 * 64


def hhr_run(p, c0, m_hat, F, cursor, n, **kw):
    return HHR(p, c0, m_hat, F, n, **kw).run(cursor)


# ----------------------------------------------------------- geometry

class ScalingTable:
    """Memo of X_i^(1..k) rows for the items met so far.

    The values are a pure function of the hash seed, so the memo is a speed
    device: it is not part of the accounted state.
    """

    def __init__(self, sampler, n):
        self.sampler = sampler
        self.k = sampler.k
        self.index = np.full(n + 1, -1, dtype=np.int64)
        self.X = np.empty((64, self.k))
        self.size = 0

    def rows(self, items):
        items = np.asarray(items, dtype=np.int64)
        idx = self.index[items]
        new = np.unique(items[idx < 0])
        if new.size:
            need = self.size + new.size
            if need > self.X.shape[0]:
                grown = np.empty((max(need, 2 * self.X.shape[0]), self.k))
                grown[:self.size] = self.X[:self.size]
                self.X = grown
            self.X[self.size:need] = self.sampler.matrix(new)
            self.index[new] = np.arange(self.size, need)
            self.size = need
            idx = self.index[items]
        return idx


class Geometry:
    """Levels and buckets of one C2Fp instance on top of a shared ScalingTable."""

    def __init__(self, table, params, gamma, seed):
        self.table = table
        self.params = params
        self.k = table.k
        self.gamma = int(gamma)
        self.bucket_hash = PairwiseHash(seed)
        self.lv = np.empty((0, self.k), dtype=np.int16)
        self.bk = np.empty(0, dtype=np.int64)

    def _sync(self):
        have = self.lv.shape[0]
        if have < self.table.size:
            X = self.table.X[have:self.table.size]
            lv = level_of(self.params, X).astype(np.int16)
            self.lv = np.concatenate([self.lv, lv]) if have else lv
            items = np.empty(self.table.size - have, dtype=np.int64)
            inv = np.flatnonzero(self.table.index >= have)
            items[self.table.index[inv] - have] = inv
            bk = self.bucket_hash.bucket(items.astype(np.uint64), self.gamma)
            self.bk = np.concatenate([self.bk, bk])

    def rows(self, items):
        idx = self.table.rows(items)
        self._sync()
        return idx

    def levels(self, idx):
        return self.lv[idx]

    def buckets(self, idx):
        return self.bk[idx]

    def X(self, idx, r0):
        """Scaling for row index ``idx`` and zero-based repetition ``r0``."""
        return self.table.X[idx, r0]


# ----------------------------------------------------------- SmallApprox

class SmallApprox:
    def __init__(self, p, eps, n, cap, seed, delta=0.01):
        self.sk = TurnstileFp(p, eps, delta, seed, n, cap=cap)

    def update_many(self, batch):
        if not self.sk.failed:
            keys, cnt = as_batch(batch).hist()
            self.sk.update_many(keys, cnt)

    @property
    def failed(self):
        return self.sk.failed

    def query(self):
        return self.sk.query()

    def bits(self):
        return 0 if self.sk.failed else self.sk.bits()


# ------------------------------------------------------------- SmallCont

class SmallCont:
    """Scaled pairs in levels 0..w0.

    Per level, a bounded CountSketch over hashed pair ids counts the whole
    level sub-stream.  Per (level, repetition) cell, a heavy-hitter tally
    reads the cell's sub-stream until its length quota is used up; its
    consumed length m_w is kept for rescaling.
    """

    def __init__(self, geo, cfg, seed):
        self.geo = geo
        self.cfg = cfg
        self.k = geo.k
        self.w0 = cfg.w0
        self.q = int(cfg.hh_quota)
        self.phi = 1.0 / max(cfg.w0, 1)
        self.U = max(16, math.ceil((max(cfg.w0, 1) / cfg.eps) ** 4))
        self.key_hash = PairwiseHash(derive_seed(seed, 11))
        B = BoundedCountSketch.cap_for(cfg.n, cfg.eps)
        rows = max(3, math.ceil(math.log2(max(cfg.w0, 1) / cfg.eps ** 2)))
        self.cs = [BoundedCountSketch(rows, cfg.cs_width, B, derive_seed(seed, 12, w))
                   for w in range(self.w0 + 1)]
        ncell = (self.w0 + 1) * self.k
        self.cell_len = np.zeros(ncell, dtype=np.int64)
        self.cell_used = np.zeros(ncell, dtype=np.int64)
        self.seen = np.zeros(cfg.n + 1, dtype=bool)
        self.p_item = np.empty(0, dtype=np.int64)
        self.p_row = np.empty(0, dtype=np.int64)
        self.p_r0 = np.empty(0, dtype=np.int64)
        self.p_w = np.empty(0, dtype=np.int64)
        self.p_key = np.empty(0, dtype=np.int64)
        self.p_cell = np.empty(0, dtype=np.int64)
        self.p_tally = np.empty(0, dtype=np.int64)
        self.p_loc = {w: (np.empty((cs.rows, 0), dtype=np.int64),) * 2
                      for w, cs in enumerate(self.cs)}
        self.m = 0

    def _register(self, items):
        new = items[~self.seen[items]]
        if not new.size:
            return
        self.seen[new] = True
        idx = self.geo.rows(new)
        lv = self.geo.levels(idx)
        ui, r0 = np.nonzero((lv >= 0) & (lv <= self.w0))
        if not ui.size:
            return
        w = lv[ui, r0].astype(np.int64)
        it = new[ui]
        pk = self.key_hash.bucket((r0.astype(np.uint64) * np.uint64(self.cfg.n + 1)
                                   + it.astype(np.uint64)), self.U) + 1
        self.p_item = np.concatenate([self.p_item, it])
        self.p_row = np.concatenate([self.p_row, idx[ui]])
        self.p_r0 = np.concatenate([self.p_r0, r0])
        self.p_w = np.concatenate([self.p_w, w])
        self.p_key = np.concatenate([self.p_key, pk])
        self.p_cell = np.concatenate([self.p_cell, w * self.k + r0])
        self.p_tally = np.concatenate([self.p_tally, np.zeros(ui.size, dtype=np.int64)])
        # sketch cells are a fixed function of the key; locate them once
        for lv_w in np.unique(w).tolist():
            sel = w == lv_w
            idx_w, sg_w = self.cs[lv_w].locate(pk[sel])
            old_i, old_s = self.p_loc[lv_w]
            self.p_loc[lv_w] = (np.concatenate([old_i, idx_w], axis=1),
                                np.concatenate([old_s, sg_w], axis=1))

    def update_many(self, batch):
        batch = as_batch(batch)
        items, cnt = batch.hist()
        self.m += batch.size
        self._register(items)
        if not self.p_item.size:
            return
        hist = np.zeros(self.cfg.n + 1, dtype=np.int64)
        hist[items] = cnt
        wts = hist[self.p_item]
        nz = wts > 0
        if not nz.any():
            return
        for w in np.unique(self.p_w[nz]).tolist():
            on = self.p_w == w
            sel = nz[on]
            idx, sg = self.p_loc[w]
            self.cs[w].update_located(idx[:, sel], sg[:, sel], wts[on][sel])
        self.cell_len += np.bincount(self.p_cell[nz], weights=wts[nz],
                                     minlength=self.cell_len.size).astype(np.int64)
        self._tally(batch, hist, nz & (self.cell_used[self.p_cell] < self.q))

    def _tally(self, batch, hist, act):
        if not act.any():
            return
        pa = np.flatnonzero(act)
        cells = self.p_cell[pa]
        want = hist[self.p_item[pa]]
        demand = np.bincount(cells, weights=want, minlength=self.cell_len.size)
        per_cell = np.bincount(cells, minlength=self.cell_len.size)
        fits = self.cell_used[cells] + demand[cells] <= self.q
        # cells whose whole demand fits the quota, or that are fed by one
        # pair in this chunk, need no ordering
        easy = fits | (per_cell[cells] == 1)
        s = pa[easy]
        if s.size:
            room = self.q - self.cell_used[self.p_cell[s]]
            take = np.minimum(hist[self.p_item[s]], room)
            self.p_tally[s] += take
            np.add.at(self.cell_used, self.p_cell[s], take)
        multi = pa[~easy]
        if not multi.size:
            return
        # several pairs share an overflowing cell: the quota goes to the
        # earliest positions.  An item has at most one pair per cell, so the
        # cell's running count grows by at most one per position and a
        # bisection over the cut-off position finds the exact split.
        arr = batch.arr
        span = np.int64(arr.size + 1)
        order = np.argsort(arr, kind="stable")
        keyed = arr[order].astype(np.int64) * span + order
        it = self.p_item[multi].astype(np.int64) * span
        base = np.searchsorted(keyed, it)
        cell = self.p_cell[multi]
        ucell, cinv = np.unique(cell, return_inverse=True)
        room = self.q - self.cell_used[ucell]
        lo = np.zeros(ucell.size, dtype=np.int64)
        hi = np.full(ucell.size, arr.size, dtype=np.int64)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            got = np.searchsorted(keyed, it + mid[cinv]) - base
            cum = np.bincount(cinv, weights=got, minlength=ucell.size)
            enough = cum >= room
            hi = np.where(enough, mid, hi)
            lo = np.where(enough, lo, mid)
        take = np.searchsorted(keyed, it + hi[cinv]) - base
        self.p_tally[multi] += take
        np.add.at(self.cell_used, cell, take)

    def query(self, m_total=None):
        if not self.p_item.size:
            return np.zeros(0)
        t = self.p_tally
        live = t > 0
        if not live.any():
            return np.zeros(0)
        f2 = np.bincount(self.p_cell[live], weights=t[live].astype(np.float64) ** 2,
                         minlength=self.cell_len.size)
        heavy = t.astype(np.float64) ** 2 >= self.phi ** 2 * f2[self.p_cell]
        # level 0 has no upper bound on X, so a light pair there can still
        # carry one of the largest scaled values
        heavy = live & (heavy | (self.p_w == 0))
        hp = np.flatnonzero(heavy)
        vals = np.empty(hp.size)
        for w in np.unique(self.p_w[hp]).tolist():
            sel = self.p_w[hp] == w
            vals[sel] = self.cs[w].query_many(self.p_key[hp[sel]])
        used = self.cell_used[self.p_cell[hp]]
        total = self.cell_len[self.p_cell[hp]]
        rescaled = t[hp] * total / np.maximum(used, 1)
        # a tally that read its whole cell is exact; otherwise a finite
        # sketch cell beats extrapolating a partial tally
        f = np.where(used >= total, t[hp], np.where(np.isfinite(vals), vals, rescaled))
        X = self.geo.X(self.p_row[hp], self.p_r0[hp])
        out = X * f
        return out[f > 0]

    @property
    def pair_count(self):
        return int(self.p_item.size)

    def bits(self):
        b = sum(cs.bits() for cs in self.cs)
        n_cells = int(np.count_nonzero(self.cell_len))
        tracked = int(np.count_nonzero(self.p_tally))
        b += n_cells * 2 * width_bits(max(self.m, 1))
        b += tracked * (width_bits(self.U) + width_bits(self.q))
        return b + 2 * 61


# ------------------------------------------------------------- LargeCont

_LEN, _HHR, _QUERY = 0, 1, 2


class LargeContWithLength:
    """Level-by-level search for large scaled values, given a length guess.

    For each level w > w0 three consecutive windows of z_w updates are read:
    one to estimate every cell's sub-stream length, one for the cells' HHR
    runs (all cells of the level share the window), and one to count the
    surviving candidates.  A cell is (bucket t, repetition r).
    """

    def __init__(self, geo, cfg, m_hat):
        self.geo = geo
        self.cfg = cfg
        self.k = geo.k
        self.p = cfg.p
        self.m_hat = float(m_hat)
        self.levels = list(range(cfg.w0 + 1, geo.params.w_max + 1))
        self.t = max(1, math.ceil(cfg.c1 * math.log2(max(cfg.n, 2))))
        self.floor = math.log2(max(cfg.n, 2)) ** cfg.c3
        self.slots = math.ceil(1.0 / cfg.c2 - 1e-12)
        self.li = 0
        self.phase = _LEN
        self.buf = []
        self.filled = 0
        self.heap = np.empty(0, dtype=np.int64)
        self.consumed = 0
        self.hhr_consumed = 0
        self.cells = np.empty(0, dtype=np.int64)
        self.m1 = np.empty(0, dtype=np.int64)
        self.surv_cell = np.empty(0, dtype=np.int64)
        self.surv_item = np.empty(0, dtype=np.int64)
        self.peak_cells = 0
        self.win = self._win() if self.levels else 0

    @property
    def done(self):
        return self.li >= len(self.levels)

    @property
    def level(self):
        return self.levels[self.li]

    def _win(self):
        return window_length(self.cfg.z_mult, self.m_hat, self.level, self.p)

    def update_many(self, batch):
        arr = as_batch(batch).arr
        pos = 0
        while pos < arr.size and not self.done:
            piece = arr[pos:pos + self.win - self.filled]
            pos += piece.size
            self.buf.append(piece)
            self.filled += piece.size
            self.consumed += piece.size
            if self.filled == self.win:
                window = np.concatenate(self.buf) if len(self.buf) > 1 else self.buf[0]
                self.buf = []
                self.filled = 0
                self._close(window)

    def _close(self, window):
        if self.phase == _LEN:
            self._length(window)
            self.phase = _HHR
        elif self.phase == _HHR:
            self.hhr_consumed += window.size
            self._hhr(window)
            self.phase = _QUERY
        else:
            self._query(window)
            self.phase = _LEN
            self.li += 1
            if not self.done:
                self.win = self._win()

    def _pairs_at_level(self, items):
        idx = self.geo.rows(items)
        lv = self.geo.levels(idx)
        ui, r0 = np.nonzero(lv == self.level)
        cell = self.geo.buckets(idx[ui]) * self.k + r0
        return ui, r0, cell

    def _length(self, window):
        items, cnt = np.unique(window, return_counts=True)
        ui, r0, cell = self._pairs_at_level(items)
        if not cell.size:
            self.cells = np.empty(0, dtype=np.int64)
            self.m1 = np.empty(0, dtype=np.int64)
            return
        ucell, inv = np.unique(cell, return_inverse=True)
        ccount = np.bincount(inv, weights=cnt[ui]).astype(np.int64)
        z = window.size
        m_cell = ccount * self.m_hat / z
        w = self.level
        F_prior = 2.0 ** w / self.cfg.C ** self.p
        wanted = m_cell ** 2 / F_prior ** (2.0 / self.p)
        # the trunks of a cell must fit its share of the next window
        fit = np.floor(ccount / (2.0 * self.t))
        m1 = np.maximum(np.minimum(wanted, fit), self.floor)
        self.cells = ucell
        self.m1 = np.maximum(1, np.ceil(m1)).astype(np.int64)
        self.peak_cells = max(self.peak_cells, int(ucell.size))

    def _hhr(self, window):
        self.surv_cell = np.empty(0, dtype=np.int64)
        self.surv_item = np.empty(0, dtype=np.int64)
        if not self.cells.size:
            return
        items, inv = np.unique(window, return_inverse=True)
        ui, r0, cell = self._pairs_at_level(items)
        ci = np.searchsorted(self.cells, cell)
        ci_c = np.minimum(ci, self.cells.size - 1)
        ok = (ci < self.cells.size) & (self.cells[ci_c] == cell)
        ui, ci = ui[ok], ci[ok]
        if not ui.size:
            return
        order = np.argsort(ui, kind="stable")
        ui, ci = ui[order], ci[order]
        deg = np.bincount(ui, minlength=items.size)
        start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        d = deg[inv]
        ev_pos_item = np.repeat(inv, d)
        base = np.repeat(start[inv], d)
        off = np.arange(base.size) - np.repeat(np.cumsum(d) - d, d)
        ev_cell = ci[base + off]
        # events are in stream order; a stable sort by cell keeps that order
        o = np.argsort(ev_cell, kind="stable")
        ev_cell = ev_cell[o]
        ev_item = items[ev_pos_item[o]]
        first = np.searchsorted(ev_cell, ev_cell, side="left")
        rank = np.arange(ev_cell.size) - first
        m1 = self.m1[ev_cell]
        trunk = rank // m1
        total = np.bincount(ev_cell, minlength=self.cells.size)
        complete = total >= self.t * self.m1
        keep = (trunk < self.t) & complete[ev_cell]
        if not keep.any():
            return
        tid = ev_cell[keep] * self.t + trunk[keep]
        key = tid * (self.cfg.n + 1) + ev_item[keep]
        uk, cnt = np.unique(key, return_counts=True)
        utid = uk // (self.cfg.n + 1)
        uitem = uk % (self.cfg.n + 1)
        _, tinv = np.unique(utid, return_inverse=True)
        f2 = np.bincount(tinv, weights=cnt.astype(np.float64) ** 2)[tinv]
        heavy = cnt.astype(np.float64) ** 2 >= self.cfg.c2 ** 2 * f2
        hc = utid[heavy] // self.t
        hi = uitem[heavy]
        # Misra-Gries across each cell's trunks; exact when candidates fit
        pair = np.unique(hc * (self.cfg.n + 1) + hi)
        pc = pair // (self.cfg.n + 1)
        nc = np.bincount(pc, minlength=self.cells.size)
        fits = nc[pc] <= self.slots
        sc = [pc[fits]]
        si = [pair[fits] % (self.cfg.n + 1)]
        for c in np.unique(pc[~fits]).tolist():
            mg = MisraGries(self.cfg.c2)
            sel = hc == c
            for a in hi[sel].tolist():   # trunk order, then item id
                mg.update(a)
            got = np.array(sorted(mg.query()), dtype=np.int64)
            sc.append(np.full(got.size, c, dtype=np.int64))
            si.append(got)
        self.surv_cell = np.concatenate(sc)
        self.surv_item = np.concatenate(si)

    def _query(self, window):
        if not self.surv_item.size:
            return
        items, cnt = np.unique(window, return_counts=True)
        j = np.searchsorted(items, self.surv_item)
        jc = np.minimum(j, items.size - 1)
        raw = np.where((j < items.size) & (items[jc] == self.surv_item), cnt[jc], 0)
        live = raw > 0
        if not live.any():
            return
        idx = self.geo.rows(self.surv_item[live])
        r0 = self.cells[self.surv_cell[live]] % self.k
        val = self.geo.X(idx, r0) * raw[live] * (self.m_hat / window.size)
        e = quantize(val, self.cfg.eps)
        merged = np.concatenate([self.heap, e])
        if merged.size > self.k:
            merged = -np.partition(-merged, self.k - 1)[:self.k]
        self.heap = merged

    def query(self, m_total):
        if not self.done:
            return FAIL
        return dequantize(self.heap, self.cfg.eps) * (m_total / self.m_hat)

    def bits(self):
        b = self.heap.size * 32
        b += self.cells.size * (width_bits(self.cfg.gamma * self.k) + 32)
        b += self.surv_item.size * (width_bits(self.cfg.n) + 32)
        return b + 4 * 64


class LargeCont:
    """Two LargeContWithLength instances under a doubling length guess."""

    def __init__(self, geo, cfg):
        self.geo = geo
        self.cfg = cfg
        self.m_hat = 2
        self.m1 = 0
        self.A1 = LargeContWithLength(geo, cfg, self.m_hat)
        self.A2 = LargeContWithLength(geo, cfg, self.m_hat)
        self.rotations = 0

    def update_many(self, batch):
        batch = as_batch(batch)
        pos = 0
        while pos < batch.size:
            step = min(batch.size - pos, 2 * self.m_hat - self.m1)
            piece = batch.part(pos, pos + step) if step < batch.size else batch
            pos += step
            self.A1.update_many(piece)
            self.A2.update_many(piece)
            self.m1 += step
            if 2 * self.m_hat <= self.m1:
                self.A1 = self.A2
                self.m_hat = self.m1
                self.A2 = LargeContWithLength(self.geo, self.cfg, self.m_hat)
                self.rotations += 1

    def query(self, m_total):
        out = self.A1.query(m_total)
        if is_fail(out):
            out = self.A2.query(m_total)
        return out

    @property
    def hhr_consumed(self):
        return self.A1.hhr_consumed

    @property
    def window_consumed(self):
        return self.A1.consumed

    def bits(self):
        return self.A1.bits() + self.A2.bits() + 2 * 64


# ------------------------------------------------------------------ C2Fp

class C2Fp:
    """(1 +- eps) estimate of F_p given rough priors on the length and on F_p."""

    def __init__(self, cfg, m0, G0, table, seed):
        self.cfg = cfg
        self.p = cfg.p
        self.k = cfg.k
        self.m0 = m0
        self.G0 = max(float(G0), 1.0)
        L = self.G0 ** (1.0 / self.p)
        self.params = LevelParams(cfg.C, L, cfg.p, w0=cfg.w0)
        self.geo = Geometry(table, self.params, cfg.gamma, derive_seed(seed, 21))
        self.B1 = SmallApprox(cfg.p, cfg.eps, cfg.n, cfg.small_cap, derive_seed(seed, 22))
        self.B2 = SmallCont(self.geo, cfg, derive_seed(seed, 23))
        self.B3 = LargeCont(self.geo, cfg)
        self.m = 0

    def update_many(self, batch):
        batch = as_batch(batch)
        self.m += batch.size
        self.B1.update_many(batch)
        self.B2.update_many(batch)
        self.B3.update_many(batch)

    def values(self):
        v2 = self.B2.query(self.m)
        v3 = self.B3.query(self.m)
        if is_fail(v2) or is_fail(v3):
            return FAIL
        return np.concatenate([v2, v3])

    def query(self):
        if not self.B1.failed:
            return self.B1.query()
        vals = self.values()
        if is_fail(vals):
            return FAIL
        R = quantile_estimate(vals, self.k)
        return R ** self.p / 2.0

    def bits(self):
        return self.B1.bits() + self.B2.bits() + self.B3.bits() + 3 * 64


# ----------------------------------------------------------------- RndFp

class _Copy:
    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.seed = seed
        sampler = PInverseSampler(cfg.p, cfg.k, derive_seed(seed, 31), cfg.n + 1)
        self.table = ScalingTable(sampler, cfg.n)
        self.A3 = TurnstileFp(cfg.p, cfg.const_eps, 0.05, derive_seed(seed, 32), cfg.n)
        self.m0 = 1
        self.G0 = 1.0
        self.made = 0
        self.A1 = self._new()
        self.A2 = self._new()

    def _new(self):
        self.made += 1
        return C2Fp(self.cfg, self.m0, self.G0, self.table,
                    derive_seed(self.seed, 40, self.made))


class RndFp:
    """Single-pass F_p estimate: rotating C2Fp instances, median over copies."""

    def __init__(self, p, eps, delta, n, seed=0, config=None, copies=None):
        base = config if config is not None else FpConfig(p=p, eps=eps, delta=delta, n=n)
        base = replace(base, p=p, eps=eps, delta=delta, n=n)
        self.outer = base.resolved()
        self.cfg = base.inner()
        if copies is not None:
            self.outer.copies = copies
        self.p = p
        self.n = n
        self.m1 = 1
        self.m = 0
        self.rot = self.outer.rot
        self.copies = []
        if p != 1:
            self.copies = [_Copy(self.cfg, derive_seed(seed, 50, j))
                           for j in range(self.outer.copies)]
        self.peak_bits = 0
        self.rotations = 0

    def update_many(self, items):
        arr = np.asarray(items).astype(np.int64, copy=False)
        pos = 0
        while pos < arr.size:
            if self.p == 1:
                self.m1 += arr.size - pos
                self.m += arr.size - pos
                break
            m0 = self.copies[0].m0
            to_rot = max(1, math.ceil(self.rot * m0 - self.m1))
            step = min(arr.size - pos, to_rot, CHUNK)
            batch = Batch(arr[pos:pos + step])
            pos += step
            for c in self.copies:
                c.A1.update_many(batch)
                c.A2.update_many(batch)
                keys, cnt = batch.hist()
                c.A3.update_many(keys, cnt)
            self.m1 += step
            self.m += step
            if self.m1 >= self.rot * m0:
                self.rotations += 1
                for c in self.copies:
                    c.A1 = c.A2
                    c.G0 = c.A3.query()
                    c.m0 = self.m1
                    c.A2 = c._new()
            self.peak_bits = max(self.peak_bits, self.bits())

    def run(self, stream):
        for chunk in Cursor(stream).chunks(CHUNK):
            self.update_many(chunk)
        return self.query()

    def copy_estimates(self):
        return [c.A1.query() for c in self.copies]

    def query(self):
        if self.p == 1:
            return float(self.m)
        ests = [e for e in self.copy_estimates() if not is_fail(e)]
        if not ests:
            return FAIL
        return float(np.median(ests))

    @property
    def m0(self):
        return self.copies[0].m0 if self.copies else 1

    def hhr_consumed(self):
        if not self.copies:
            return 0
        return max(c.A1.B3.hhr_consumed for c in self.copies)

    def window_consumed(self):
        if not self.copies:
            return 0
        return max(c.A1.B3.window_consumed for c in self.copies)

    def bits(self):
        if self.p == 1:
            return width_bits(max(self.m, 1))
        total = 0
        for c in self.copies:
            total += c.A1.bits() + c.A2.bits() + c.A3.bits() + 2 * 64
        return total + 2 * 64
