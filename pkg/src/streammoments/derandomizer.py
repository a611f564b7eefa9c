"""Deterministic F_p estimation for random-order streams.

Nothing in this module draws random numbers.  The bits that seed the
randomized estimator are read off the stream: the parity of the position at
which a rarely seen item first shows up is close to a fair coin when the
order is uniformly random.

Phases of ``DeterministicFp``:

1. Store the first ``t`` distinct items exactly (counts, first positions).
   Position ``s1`` is where the t-th distinct item arrives.
2. Turn first-arrival parities of the rarest of them into bits, and use those
   bits to pick a prime ``q``.  Items are from now on stored as ids mod q.
3. Track the next ``|R|`` distinct items with counts snapshotted at doubling
   horizons 1, 2, 4, ... after ``s1``.  Their parities give the seed.
4. Run the seeded randomized estimator on the rest of the stream, and keep
   the prefix counts alive until its estimate is 1/eps times the prefix F_p.
"""

import math
from dataclasses import dataclass

import numpy as np

from .common import width_bits
from .fp import CHUNK, FpConfig, RndFp
from .stream import Cursor, Stream


class InsufficientPrefix(RuntimeError):
    """Too few distinct items were seen to extract the requested bits."""


@dataclass
class DetConfig:
    p: float
    eps: float
    delta: float = 0.1
    n: int = 1024
    s_mult: float = 1.0     # s = s_mult * (log2 log2 n + log2 1/delta)
    t_mult: float = 1.0     # |H| >= t_mult * s / delta
    l_frac: float = 0.5     # share of the pool (rarest first) that yields bits
    r_mult: float = 1.0     # |R| = r_mult * log2 n / delta
    thr_mult: float = 4.0   # horizon threshold thr_mult * log2 n / eps^2
    seed_bits: int = 64
    fp: FpConfig = None

    @property
    def s(self):
        loglog = math.log2(max(math.log2(max(self.n, 4)), 2))
        return max(1, math.ceil(self.s_mult * (loglog + math.log2(1.0 / self.delta))))

    @property
    def prime_bits(self):
        return prime_index_bits(self.n, self.delta) + 4

    @property
    def t(self):
        need = math.ceil(self.prime_bits / self.l_frac)
        return max(need, math.ceil(self.t_mult * self.s / self.delta))

    @property
    def r_size(self):
        need = math.ceil(min(self.seed_bits, 32) / self.l_frac)
        return max(need, math.ceil(self.r_mult * math.log2(max(self.n, 2)) / self.delta))

    @property
    def threshold(self):
        return math.ceil(self.thr_mult * math.log2(max(self.n, 2)) / self.eps ** 2)

    def fp_config(self):
        if self.fp is not None:
            return self.fp
        return FpConfig.calibrated(self.p, self.eps, self.delta, self.n)


# ------------------------------------------------------------ bit sources

@dataclass(frozen=True)
class ExtractedBits:
    bits: tuple
    items: tuple        # the ids (or residues) of L, in the order the bits follow
    pool_size: int

    def __len__(self):
        return len(self.bits)

    def as_int(self, length=None):
        b = self.bits if length is None else self.bits[:length]
        return int("".join(map(str, b)), 2) if b else 0


_MINT = object()


class SeedSource:
    """Seed for the randomized phase; only ``seed_from`` can build one."""

    __slots__ = ("value", "length")

    def __init__(self, value, length, _token=None):
        if _token is not _MINT:
            raise TypeError("a SeedSource is only built from extracted bits")
        self.value = int(value)
        self.length = int(length)

    def __repr__(self):
        return f"SeedSource({self.length} bits)"


def seed_from(extracted, length=64):
    n_bits = min(length, len(extracted))
    return SeedSource(extracted.as_int(n_bits), n_bits, _token=_MINT)


def extract_bits(ledger, frac=0.5):
    """Parities of first arrivals of the rarest ``frac`` share of the pool.

    The pool is whatever ``ledger.pool()`` returns: ids, (approximate)
    counts and first-arrival parities.  Items are ranked by count (ties by
    id), the smallest share is kept, and the bits are read in id order.
    """
    ids, counts, parities = ledger.pool()
    ids = np.asarray(ids, dtype=np.int64)
    t = ids.size
    size = int(math.floor(frac * t + 1e-9))
    if t == 0 or size < 1:
        raise InsufficientPrefix(f"{t} tracked items give no bits at share {frac}")
    order = np.lexsort((ids, np.asarray(counts, dtype=np.float64)))
    chosen = order[:size]
    chosen = chosen[np.argsort(ids[chosen], kind="stable")]
    par = np.asarray(parities, dtype=np.int64)
    return ExtractedBits(tuple(int(b) for b in par[chosen]),
                         tuple(int(i) for i in ids[chosen]), t)


# ------------------------------------------------------------------ primes

def prime_range_start(n, delta):
    return max(2, math.ceil((math.log2(max(n, 2)) / delta) ** 3))


def primes_between(lo, hi):
    """Primes in [lo, hi] via a sieve of Eratosthenes."""
    sieve = np.ones(hi + 1, dtype=bool)
    sieve[:2] = False
    for f in range(2, math.isqrt(hi) + 1):
        if sieve[f]:
            sieve[f * f::f] = False
    return np.flatnonzero(sieve[lo:]) + lo


_PRIME_CACHE = {}


def prime_table(n, delta):
    P0 = prime_range_start(n, delta)
    if P0 not in _PRIME_CACHE:
        _PRIME_CACHE[P0] = primes_between(P0, 2 * P0)
    return _PRIME_CACHE[P0]


def prime_index_bits(n, delta):
    return max(1, math.ceil(math.log2(len(prime_table(n, delta)))))


def sample_prime(bits, n, delta):
    """The (bits mod Pi)-th prime of [P0, 2 P0] where P0 = (log2 n / delta)^3.

    ``bits`` is a sequence of 0/1 values read as a big-endian integer; at most
    ceil(log2 Pi) + 4 of them are used.
    """
    table = prime_table(n, delta)
    need = prime_index_bits(n, delta)
    bits = tuple(int(b) for b in bits)
    if len(bits) < need:
        raise InsufficientPrefix(f"need {need} bits to pick a prime, got {len(bits)}")
    use = bits[:need + 4]
    value = int("".join(map(str, use)), 2)
    return int(table[value % len(table)])


# ---------------------------------------------------------------- ledgers

class PrefixLedger:
    """Exact record of the first ``t`` distinct items of the stream."""

    def __init__(self, t, n):
        self.t = int(t)
        self.n = int(n)
        self.counts = {}
        self.first = {}
        self.pos = 0
        self.s1 = None

    @property
    def full(self):
        return self.s1 is not None

    def feed(self, chunk):
        """Consume updates until t distinct items are stored; returns the count used."""
        arr = np.asarray(chunk, dtype=np.int64)
        if self.full or not arr.size:
            return 0
        u, first_idx = np.unique(arr, return_index=True)
        fresh = np.array([i not in self.first for i in u.tolist()], dtype=bool)
        new_items, new_first = u[fresh], first_idx[fresh]
        order = np.argsort(new_first, kind="stable")
        new_items, new_first = new_items[order], new_first[order]
        room = self.t - len(self.first)
        used = arr.size
        if new_items.size >= room:
            used = int(new_first[room - 1]) + 1
            new_items, new_first = new_items[:room], new_first[:room]
        for i, f in zip(new_items.tolist(), new_first.tolist()):
            self.first[i] = self.pos + f + 1
        keys, cnt = np.unique(arr[:used], return_counts=True)
        for i, c in zip(keys.tolist(), cnt.tolist()):
            self.counts[i] = self.counts.get(i, 0) + c
        self.pos += used
        if len(self.first) == self.t:
            self.s1 = self.pos
        return used

    def pool(self):
        ids = np.array(sorted(self.first), dtype=np.int64)
        counts = np.array([self.counts[i] for i in ids.tolist()], dtype=np.int64)
        parities = np.array([self.first[i] % 2 for i in ids.tolist()], dtype=np.int64)
        return ids, counts, parities

    def bits(self):
        per = width_bits(self.n) + width_bits(max(self.pos, 1)) + 1
        return len(self.first) * per + 2 * width_bits(max(self.pos, 1))


class HorizonCounter:
    """Counts of tracked residues since position ``s1``, kept at doubling horizons.

    For every tracked residue we keep the largest i such that its count over
    positions s1+1 .. s1+2^(i-1) is at most ``thr``, together with that
    count.  While the running count is still small it is also kept exactly.
    """

    def __init__(self, q, thr, s1):
        self.q = int(q)
        self.thr = int(thr)
        self.s1 = int(s1)
        self.elapsed = 0
        self.res = np.empty(0, dtype=np.int64)      # sorted residues
        self.live = np.empty(0, dtype=np.int64)     # running count since s1
        self.h_idx = np.zeros(0, dtype=np.int64)    # last horizon index kept
        self.h_cnt = np.zeros(0, dtype=np.int64)    # count at that horizon
        self.frozen = np.zeros(0, dtype=bool)
        self.first = np.empty(0, dtype=np.int64)    # first arrival position (global)
        self.prefix = np.zeros(0, dtype=np.int64)   # exact count before s1 (H items)
        self.in_r = np.zeros(0, dtype=bool)

    def __len__(self):
        return int(self.res.size)

    def residues(self, items):
        return np.asarray(items, dtype=np.int64) % self.q

    def add(self, residues, first, prefix, in_r):
        residues = np.asarray(residues, dtype=np.int64)
        allr = np.concatenate([self.res, residues])
        order = np.argsort(allr, kind="stable")

        def grow(old, new):
            return np.concatenate([old, np.asarray(new, dtype=old.dtype)])[order]

        k = residues.size
        self.live = grow(self.live, np.zeros(k))
        self.h_idx = grow(self.h_idx, np.zeros(k))
        self.h_cnt = grow(self.h_cnt, np.zeros(k))
        self.frozen = grow(self.frozen, np.zeros(k, dtype=bool))
        self.first = grow(self.first, first)
        self.prefix = grow(self.prefix, prefix)
        self.in_r = grow(self.in_r, in_r)
        self.res = allr[order]

    def lookup(self, residues):
        """Index of each residue among the tracked ones, -1 when untracked."""
        if not self.res.size:
            return np.full(np.shape(residues), -1, dtype=np.int64)
        j = np.searchsorted(self.res, residues)
        jc = np.minimum(j, self.res.size - 1)
        return np.where(self.res[jc] == residues, jc, -1)

    def feed(self, chunk):
        """Count one chunk, closing every horizon it crosses."""
        arr = np.asarray(chunk, dtype=np.int64)
        pos = 0
        while pos < arr.size:
            nxt = 1 << max(0, self.elapsed).bit_length()   # next power of two
            step = min(arr.size - pos, nxt - self.elapsed)
            piece = arr[pos:pos + step]
            pos += step
            if self.res.size:
                idx = self.lookup(self.residues(piece))
                idx = idx[idx >= 0]
                if idx.size:
                    add = np.bincount(idx, minlength=self.res.size)
                    self.live += np.where(self.frozen, 0, add)
            self.elapsed += step
            if self.elapsed == nxt:
                self._close(nxt.bit_length())

    def _close(self, i):
        ok = ~self.frozen & (self.live <= self.thr)
        self.h_idx = np.where(ok, i, self.h_idx)
        self.h_cnt = np.where(ok, self.live, self.h_cnt)
        self.frozen |= ~ok

    def snapshot(self):
        """residue -> (horizon index, count at that horizon)."""
        return {int(r): (int(i), int(c))
                for r, i, c in zip(self.res, self.h_idx, self.h_cnt)}

    def estimate_since(self, elapsed=None):
        """Estimated counts over s1+1 .. s1+elapsed for every tracked residue."""
        e = self.elapsed if elapsed is None else int(elapsed)
        if not self.res.size:
            return np.zeros(0)
        g = np.exp2(np.maximum(self.h_idx, 1) - 1.0)
        scaled = np.where(self.h_idx > 0, self.h_cnt * (e / g), 0.0)
        return np.where(self.frozen, scaled, self.live.astype(np.float64))

    def totals(self):
        return self.prefix + self.estimate_since()

    def bits(self):
        per = (width_bits(self.q) + 2 * width_bits(2 * self.thr + 1)
               + width_bits(64) + 1 + 1)
        return self.res.size * per + width_bits(self.q) + 2 * 64


class _RPool:
    """The R items seen through a HorizonCounter, as a pool for ``extract_bits``."""

    def __init__(self, counter):
        self.counter = counter

    def pool(self):
        c = self.counter
        sel = c.in_r
        est = c.estimate_since()[sel]
        return c.res[sel], est, c.first[sel] % 2


def snapshot_counts(ledger, cursor, q, thr, r_size=None):
    """Track the ledger's items plus up to ``r_size`` new ones over the rest of ``cursor``.

    Returns the HorizonCounter; its ``snapshot()`` gives per residue the
    horizon index and the count kept there.
    """
    counter = HorizonCounter(q, thr, ledger.s1)
    ids, counts, _ = ledger.pool()
    first = np.array([ledger.first[i] for i in ids.tolist()], dtype=np.int64)
    counter.add(counter.residues(ids), first, counts, np.zeros(ids.size, dtype=bool))
    tracker = _RCollector(counter, r_size or 0, ledger.s1)
    for chunk in cursor.chunks(CHUNK):
        used = tracker.feed(chunk)
        if used < chunk.size:
            counter.feed(chunk[used:])
    return counter


class _RCollector:
    """Adds new distinct residues to a counter until ``r_size`` of them are in."""

    def __init__(self, counter, r_size, start):
        self.counter = counter
        self.r_size = int(r_size)
        self.pos = int(start)
        self.added = 0

    @property
    def full(self):
        return self.added >= self.r_size

    def feed(self, chunk):
        """Process updates up to the handoff point; returns how many were consumed."""
        arr = np.asarray(chunk, dtype=np.int64)
        if self.full or not arr.size:
            return 0
        c = self.counter
        res = c.residues(arr)
        u, first_idx = np.unique(res, return_index=True)
        fresh = c.lookup(u) < 0
        new_r, new_first = u[fresh], first_idx[fresh]
        order = np.argsort(new_first, kind="stable")
        new_r, new_first = new_r[order], new_first[order]
        used = arr.size
        room = self.r_size - self.added
        if new_r.size >= room:
            used = int(new_first[room - 1]) + 1
            new_r, new_first = new_r[:room], new_first[:room]
        if new_r.size:
            k = new_r.size
            c.add(new_r, self.pos + new_first + 1, np.zeros(k, dtype=np.int64),
                  np.ones(k, dtype=bool))
            self.added += k
        c.feed(arr[:used])
        self.pos += used
        return used


# ---------------------------------------------------------- the estimator

class DeterministicFp:
    """One pass, no internal randomness; see the module docstring for the phases."""

    def __init__(self, p, eps, delta, n, config=None):
        self.cfg = config if config is not None else DetConfig(p=p, eps=eps, delta=delta, n=n)
        self.p = float(p)
        self.eps = float(eps)
        self.delta = float(delta)
        self.n = int(n)
        self.ledger = PrefixLedger(self.cfg.t, n)
        self.counter = None
        self.collector = None
        self.rnd = None
        self.q = None
        self.prime_bits = None
        self.seed = None
        self.handoff = None
        self.prefix_fp = None
        self.switched = False
        self.path = None
        self.m = 0
        self.peak_bits = 0

    # phase bookkeeping --------------------------------------------------
    def _start_tracking(self):
        self.prime_bits = extract_bits(self.ledger, self.cfg.l_frac)
        self.q = sample_prime(self.prime_bits.bits, self.n, self.delta)
        self.counter = HorizonCounter(self.q, self.cfg.threshold, self.ledger.s1)
        ids, counts, _ = self.ledger.pool()
        first = np.array([self.ledger.first[i] for i in ids.tolist()], dtype=np.int64)
        self.counter.add(self.counter.residues(ids), first, counts,
                         np.zeros(ids.size, dtype=bool))
        self.collector = _RCollector(self.counter, self.cfg.r_size, self.ledger.s1)

    def _start_randomized(self):
        bits = extract_bits(_RPool(self.counter), self.cfg.l_frac)
        self.seed = seed_from(bits, self.cfg.seed_bits)
        self.handoff = self.m
        # no residue is added after this point, so the array stays aligned
        self.handoff_counts = self.counter.estimate_since().copy()
        self.prefix_fp = float(np.sum(self.counter.totals() ** self.p))
        self.rnd = RndFp(self.p, self.eps, self.delta, self.n, seed=self.seed.value,
                         config=self.cfg.fp_config())

    def update_many(self, chunk):
        arr = np.asarray(chunk, dtype=np.int64)
        pos = 0
        if not self.ledger.full:
            pos += self.ledger.feed(arr)
            self.m += pos
            if self.ledger.full:
                self._start_tracking()
        if self.collector is not None and not self.collector.full and pos < arr.size:
            used = self.collector.feed(arr[pos:])
            pos += used
            self.m += used
            if self.collector.full:
                self._start_randomized()
        if self.rnd is not None and pos < arr.size:
            rest = arr[pos:]
            self.rnd.update_many(rest)
            if not self.switched:
                self.counter.feed(rest)
                est = self.rnd.query()
                if isinstance(est, float) and est * self.eps >= self.prefix_fp:
                    self.switched = True
            self.m += rest.size
        self.peak_bits = max(self.peak_bits, self.bits())

    def run(self, stream):
        for chunk in Cursor(stream).chunks(CHUNK):
            self.update_many(chunk)
        return self.query()

    def query(self):
        p = self.p
        if self.rnd is None:
            self.path = "prefix"
            if self.counter is None:
                c = np.array(list(self.ledger.counts.values()), dtype=np.float64)
            else:
                c = self.counter.totals()
            return float(np.sum(c ** p))
        est = self.rnd.query()
        if self.switched:
            self.path = "randomized"
            return float(est)
        # the prefix is still a sizable share: exact-ish counts for the
        # tracked items, the randomized estimate for everything else
        self.path = "combined"
        now = self.counter.estimate_since()
        suffix = np.maximum(now - self.handoff_counts, 0.0)
        tracked = float(np.sum(self.counter.totals() ** p))
        rest = float(est) - float(np.sum(suffix ** p)) if isinstance(est, float) else 0.0
        return tracked + max(0.0, rest)

    def bits(self):
        b = self.ledger.bits() if self.counter is None else 0
        if self.counter is not None and not self.switched:
            b += self.counter.bits()
        if self.rnd is not None:
            b += self.rnd.bits()
        return b + 4 * 64


def deterministic_fp(p, eps, delta, n, source, config=None):
    """F_p estimate of ``source`` (a Stream, array or Cursor) with no internal randomness."""
    est = DeterministicFp(p, eps, delta, n, config)
    if isinstance(source, Cursor):
        for chunk in source.chunks(CHUNK):
            est.update_many(chunk)
        return est.query()
    if not isinstance(source, Stream):
        source = Stream(np.asarray(source), n)
    return est.run(source)
