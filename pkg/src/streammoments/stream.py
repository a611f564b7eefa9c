"""Streams, exact frequency oracles, seeded shuffling and synthetic generators.

Item ids live in the 1-based universe [1, n].  Streams are stored as numpy
uint64 arrays so that million-update streams stay cheap to copy and shuffle.
"""

import math
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"RSTRM1"


def make_rng(seed):
    """Portable seeded generator (PCG64) used for every shuffle and generator."""
    return np.random.Generator(np.random.PCG64(int(seed)))


class Stream:
    """Insertion-only stream over the universe [1, n]."""

    def __init__(self, updates, n):
        arr = np.asarray(updates, dtype=np.uint64).reshape(-1)
        n = int(n)
        if n < 1:
            raise ValueError("universe size must be at least 1")
        if arr.size and (arr.min() < 1 or arr.max() > n):
            raise ValueError("item id outside the universe [1, n]")
        arr.setflags(write=False)
        self.updates = arr
        self.n = n

    @property
    def m(self):
        return int(self.updates.size)

    def __len__(self):
        return self.m

    def __iter__(self):
        return (int(a) for a in self.updates)

    def __eq__(self, other):
        return (isinstance(other, Stream) and self.n == other.n
                and np.array_equal(self.updates, other.updates))

    def __repr__(self):
        return f"Stream(m={self.m}, n={self.n})"

    def counts(self):
        """Dense count vector indexed by item id (index 0 unused)."""
        return np.bincount(self.updates.astype(np.int64), minlength=self.n + 1)

    def frequency_vector(self):
        c = self.counts()
        nz = np.flatnonzero(c)
        return FrequencyVector({int(i): int(c[i]) for i in nz}, self.n)

    def slice(self, t1, t2):
        return StreamSlice(self, t1, t2)

    def induce(self, member):
        """Sub-stream of updates whose item satisfies ``member``; order kept.

        ``member`` is either a callable on item ids or a collection of ids.
        """
        if callable(member):
            keep = np.fromiter((bool(member(int(a))) for a in self.updates),
                               dtype=bool, count=self.m)
        else:
            ids = np.fromiter((int(x) for x in member), dtype=np.uint64)
            keep = np.isin(self.updates, ids)
        return Stream(self.updates[keep], self.n)

    def shuffled(self, seed):
        return shuffle(self, seed)


class StreamSlice:
    """Inclusive 1-based window ``S[t1:t2]`` of a source stream."""

    def __init__(self, source, t1, t2):
        t1, t2 = int(t1), int(t2)
        if not (1 <= t1 <= t2 <= source.m):
            raise ValueError(f"slice bounds [{t1}, {t2}] outside [1, {source.m}]")
        self.source = source
        self.t1 = t1
        self.t2 = t2

    @property
    def m(self):
        return self.t2 - self.t1 + 1

    def to_stream(self):
        return Stream(self.source.updates[self.t1 - 1:self.t2], self.source.n)


class WeightedStream:
    """Stream of (item, weight) pairs; weights may be negative (turnstile)."""

    def __init__(self, items, weights, n):
        self.items = np.asarray(items, dtype=np.int64).reshape(-1)
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if self.items.size != self.weights.size:
            raise ValueError("items and weights differ in length")
        if self.items.size and (self.items.min() < 1 or self.items.max() > n):
            raise ValueError("item id outside the universe [1, n]")
        self.n = int(n)

    @classmethod
    def from_stream(cls, stream):
        return cls(stream.updates.astype(np.int64), np.ones(stream.m), stream.n)

    @property
    def m(self):
        return int(self.items.size)

    def frequency_vector(self):
        acc = {}
        for i, w in zip(self.items.tolist(), self.weights.tolist()):
            acc[i] = acc.get(i, 0) + w
        return FrequencyVector({i: v for i, v in acc.items() if v != 0}, self.n)


@dataclass
class FrequencyVector:
    counts: dict
    n: int

    def __getitem__(self, i):
        return self.counts.get(i, 0)

    def values(self):
        return np.array(list(self.counts.values()), dtype=np.float64)


def moment_of_counts(counts, p):
    """sum_i f_i^p over a vector of frequencies, with 0^0 taken as 0."""
    f = np.asarray(counts, dtype=np.float64)
    f = f[f != 0]
    if p < 0:
        raise ValueError("p must be nonnegative")
    if p == 0:
        return float(f.size)
    if np.any(f < 0) and float(p) != int(p):
        raise ValueError("negative frequency with non-integer p")
    if float(p) == int(p):
        # integer powers: exact in Python integers when the counts are integral
        if np.all(f == np.round(f)):
            return float(sum(int(v) ** int(p) for v in f.astype(np.int64)))
        return float(np.sum(f ** int(p)))
    return float(np.sum(f ** p))


def exact_moment(stream, p):
    """Ground-truth F_p from a full count table (exempt from space accounting)."""
    if isinstance(stream, Stream):
        c = stream.counts()
        return moment_of_counts(c[c > 0], p)
    if isinstance(stream, WeightedStream):
        return moment_of_counts(stream.frequency_vector().values(), p)
    if isinstance(stream, FrequencyVector):
        return moment_of_counts(stream.values(), p)
    return moment_of_counts(list(Counter(stream).values()), p)


def shuffle(stream, seed):
    """Uniform random permutation of the updates; reproducible per seed."""
    arr = np.array(stream.updates, copy=True)
    make_rng(seed).shuffle(arr)  # Fisher-Yates
    return Stream(arr, stream.n)


@dataclass
class GeneratorSpec:
    kind: str
    n: int
    m: int
    seed: int = 0
    skew: float = 1.0
    heavy_count: int = 1
    heavy_freq: int = 0
    background: int = 0
    extra: dict = field(default_factory=dict)


def zipf_counts(n, m, skew):
    """Deterministic Zipf profile: counts proportional to rank^-skew, summing to m.

    Largest-remainder rounding keeps the profile exact and monotone.
    """
    w = np.arange(1, n + 1, dtype=np.float64) ** (-float(skew))
    raw = w / w.sum() * m
    base = np.floor(raw).astype(np.int64)
    short = int(m - base.sum())
    if short:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def stream_from_counts(counts, n, seed=None):
    """Stream holding ``counts[j]`` copies of item j+1, shuffled when seeded."""
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("negative count in profile")
    ids = np.repeat(np.arange(1, counts.size + 1, dtype=np.uint64), counts)
    s = Stream(ids, n)
    return shuffle(s, seed) if seed is not None else s


def generate(spec):
    """Build the stream declared by ``spec`` (deterministic per seed)."""
    n, m = int(spec.n), int(spec.m)
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    if spec.kind == "uniform":
        ids = make_rng(spec.seed).integers(1, n + 1, size=m, dtype=np.uint64)
        return Stream(ids, n)
    if spec.kind == "zipf":
        return stream_from_counts(zipf_counts(n, m, spec.skew), n, spec.seed)
    if spec.kind == "planted-heavy":
        h, f, bg = int(spec.heavy_count), int(spec.heavy_freq), int(spec.background)
        if h * f + bg != m:
            raise ValueError(f"profile sums to {h * f + bg}, expected m={m}")
        if h + bg > n:
            raise ValueError("profile needs more distinct items than the universe holds")
        counts = np.zeros(n, dtype=np.int64)
        counts[:h] = f
        counts[h:h + bg] = 1
        return stream_from_counts(counts, n, spec.seed)
    raise ValueError(f"unknown generator kind {spec.kind!r}")


def planted_mixture_counts(n, m, p, share, skew=1.0):
    """Zipf background plus item 1 planted so that f_1^p is ``share`` of F_p.

    The heavy frequency is found by bisection; the background takes the rest
    of the length budget with a Zipf(skew) shape over items 2..n.
    """
    def profile(f):
        bg = zipf_counts(n - 1, m - f, skew)
        return np.concatenate([[f], bg])

    lo, hi = 1, m - (n - 1)
    for _ in range(80):
        if hi - lo <= 1:
            break
        mid = (lo + hi) // 2
        c = profile(mid)
        frac = c[0] ** p / moment_of_counts(c, p)
        if frac < share:
            lo = mid
        else:
            hi = mid
    return profile(hi)


def rank_frequency_slope(counts):
    """Least-squares slope of log(count) against log(rank) over nonzero counts."""
    c = np.sort(np.asarray(counts, dtype=np.float64))[::-1]
    c = c[c > 0]
    r = np.arange(1, c.size + 1)
    return float(np.polyfit(np.log(r), np.log(c), 1)[0])


# ---------------------------------------------------------------- file io

def write_text(stream, path):
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(a)) for a in stream.updates))
        if stream.m:
            fh.write("\n")


def read_text(path, n=None):
    vals = np.loadtxt(path, dtype=np.uint64, ndmin=1)
    if n is None:
        n = int(vals.max()) if vals.size else 1
    return Stream(vals, n)


def write_binary(stream, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\x00\x00" + struct.pack("<Q", stream.n))
        fh.write(stream.updates.astype("<u8").tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:6] != MAGIC:
            raise ValueError("not a binary stream file (bad magic)")
        n = struct.unpack("<Q", head[8:])[0]
        data = np.frombuffer(fh.read(), dtype="<u8").astype(np.uint64)
    return Stream(data, n)


def read_stream(path, n=None):
    with open(path, "rb") as fh:
        magic = fh.read(6)
    if magic == MAGIC:
        return read_binary(path)
    return read_text(path, n)


# ------------------------------------------------- subsampling oracles

def subsample_positions(m, k, rng):
    """k distinct positions of [0, m) chosen uniformly, in increasing order."""
    return np.sort(rng.choice(m, size=k, replace=False))


def subsample_band(f, m, k, delta):
    """Deviation band for the empirical frequency of a uniform k-subsample."""
    g = math.log(1.0 / delta) / k
    return 4.0 * math.sqrt(g) * max(math.sqrt(f / m), math.sqrt(g))


def distinct_bracket(counts, m, k):
    """Lower and upper bounds on the expected distinct count of a k-subsample.

    An item with f copies is missed with probability prod_j (1 - k/(m-j)) over
    j < f, which sits between (1 - k/(m-f))^f and (1 - k/m)^f.
    """
    f = np.asarray(counts, dtype=np.float64)
    f = f[f > 0]
    lower = float(np.sum(1.0 - (1.0 - k / m) ** f))
    miss_lo = np.clip(1.0 - k / np.maximum(m - f, 1.0), 0.0, 1.0) ** f
    upper = float(np.sum(1.0 - miss_lo))
    return lower, upper


class Cursor:
    """Forward-only reader over a stream; every position is handed out once."""

    def __init__(self, stream, start=0):
        self.updates = stream.updates if isinstance(stream, Stream) else np.asarray(stream)
        self.pos = int(start)
        self.m = int(self.updates.size)

    @property
    def remaining(self):
        return self.m - self.pos

    def exhausted(self):
        return self.pos >= self.m

    def take(self, count):
        """Next ``min(count, remaining)`` updates as a read-only view."""
        count = max(0, int(count))
        out = self.updates[self.pos:self.pos + count]
        self.pos += out.size
        return out

    def chunks(self, size=1 << 16):
        while not self.exhausted():
            yield self.take(size)
