"""Pairwise-independent hashing, p-inverse scalings, levels and the quantile rule.

The hash family is h(x) = (a*x + b) mod P over the Mersenne prime P = 2^61 - 1.
Everything is vectorised over numpy uint64 arrays; the scalar Python-integer
path (``hash_int``) is kept as an independent reference for the tests.
"""

import math

import numpy as np

from .stream import make_rng

MERSENNE_61 = (1 << 61) - 1
_P = np.uint64(MERSENNE_61)
_LO32 = np.uint64(0xFFFFFFFF)
_LO29 = np.uint64((1 << 29) - 1)
_S29 = np.uint64(29)
_S32 = np.uint64(32)
_S61 = np.uint64(61)


def _fold(v):
    # v < 2^64  ->  value congruent mod P and below 2^61 + 8
    return (v & _P) + (v >> _S61)


def _finish(v):
    v = _fold(v)
    return v - np.where(v >= _P, _P, np.uint64(0)).astype(np.uint64)


def mulmod61(a, x):
    """(a * x) mod (2^61 - 1) for uint64 arrays with entries below 2^61."""
    a = np.asarray(a, dtype=np.uint64)
    x = np.asarray(x, dtype=np.uint64)
    a_hi, a_lo = a >> _S32, a & _LO32
    x_hi, x_lo = x >> _S32, x & _LO32
    # 2^64 = 8 (mod P)
    top = (a_hi * x_hi) << np.uint64(3)
    mid = a_hi * x_lo + a_lo * x_hi
    # mid * 2^32 = (mid >> 29) * 2^61 + (mid & (2^29-1)) * 2^32
    mid_part = (mid >> _S29) + ((mid & _LO29) << _S32)
    low = _fold(a_lo * x_lo)
    return _finish(_fold(top) + _fold(mid_part) + low)


class PairwiseHash:
    """h(x) = (a x + b) mod P with a in [1, P-1], b in [0, P-1] drawn from a seed."""

    def __init__(self, seed, prime=MERSENNE_61):
        if prime != MERSENNE_61:
            raise ValueError("only the Mersenne prime 2^61-1 is supported")
        rng = make_rng(seed)
        self.seed = int(seed)
        self.P = MERSENNE_61
        self.a = int(rng.integers(1, MERSENNE_61, dtype=np.uint64))
        self.b = int(rng.integers(0, MERSENNE_61, dtype=np.uint64))
        self._a = np.uint64(self.a)
        self._b = np.uint64(self.b)

    def hash_int(self, x):
        """Reference scalar evaluation with Python integers."""
        return (self.a * (int(x) % self.P) + self.b) % self.P

    def __call__(self, x):
        x = np.asarray(x, dtype=np.uint64)
        x = _finish(x)
        return _finish(mulmod61(self._a, x) + self._b)

    def bucket(self, x, size):
        """Hash into [0, size); modular bias at most size / P."""
        return (self(x) % np.uint64(size)).astype(np.int64)

    def sign(self, x):
        return np.where(self(x) & np.uint64(1), 1, -1).astype(np.int64)

    def uniform(self, x):
        """u = (h + 1) / P in (0, 1]; never zero."""
        return (self(x).astype(np.float64) + 1.0) / float(self.P)

    @staticmethod
    def bits():
        return 2 * 61


def pair_key(i, r, N):
    """Key of the pair (item i, repetition r): (r - 1) * N + i."""
    return (np.asarray(r, dtype=np.uint64) - np.uint64(1)) * np.uint64(N) \
        + np.asarray(i, dtype=np.uint64)


def p_inverse_from_uniform(u, p):
    """X = floor(u^(-1/p)); P[X >= x] = x^-p for integer x when u is uniform."""
    u = np.asarray(u, dtype=np.float64)
    x = np.floor(u ** (-1.0 / p))
    return np.maximum(x, 1.0)


class PInverseSampler:
    """Scalings X_i^(r) ~ p-inverse, pairwise independent over the pairs (i, r).

    Values are computed on demand from the hash; nothing is stored per item.
    """

    def __init__(self, p, k, seed, N):
        if not (0 < p):
            raise ValueError("p must be positive")
        self.p = float(p)
        self.k = int(k)
        self.N = int(N)
        self.seed = int(seed)
        self.hash = PairwiseHash(seed)

    def uniform(self, i, r):
        return self.hash.uniform(pair_key(i, r, self.N))

    def __call__(self, i, r):
        if np.any(np.asarray(r) < 1) or np.any(np.asarray(r) > self.k):
            raise ValueError("repetition index outside [1, k]")
        return p_inverse_from_uniform(self.uniform(i, r), self.p)

    def row(self, i):
        """X_i^(1..k) for one item."""
        return self(np.full(self.k, i, dtype=np.uint64), np.arange(1, self.k + 1))

    def matrix(self, items):
        """Array of shape (len(items), k) of scalings for the given items."""
        items = np.asarray(items, dtype=np.uint64).reshape(-1, 1)
        r = np.arange(1, self.k + 1, dtype=np.uint64).reshape(1, -1)
        keys = (r - np.uint64(1)) * np.uint64(self.N) + items
        return p_inverse_from_uniform(self.hash.uniform(keys), self.p)


def st_expand(sampler, a):
    """The k weighted updates ((a, r), X_a^(r)) that one update of a turns into."""
    xs = sampler.row(a)
    return [((int(a), r + 1), float(xs[r])) for r in range(sampler.k)]


def default_k(p, eps):
    """Smallest even integer at least 160 / (p^2 eps^2)."""
    k = math.ceil(160.0 / (p * p * eps * eps) - 1e-9)
    return k + (k % 2)


class LevelParams:
    """Level geometry: level 0 holds X >= CL, level w >= 1 holds
    CL / 2^(w/p) < X <= CL / 2^((w-1)/p).
    """

    def __init__(self, C, L, p, w0=None, n=None, eps=None, d0=4.0, w_max=None):
        if C < 1:
            raise ValueError("C must be at least 1")
        self.C = float(C)
        self.L = float(L)
        self.p = float(p)
        if w0 is None:
            w0 = critical_level(n, eps, d0)
        self.w0 = int(w0)
        self.CL = self.C * self.L
        if w_max is None:
            w_max = math.ceil(self.p * math.log2(max(self.CL, 1.0))) + 1
        self.w_max = int(w_max)


def critical_level(n, eps, d0=4.0):
    return math.ceil(d0 * (math.log2(math.log2(n)) + math.log2(1.0 / eps)))


def level_of(params, X):
    """Level of a scaling X (scalar or array); -1 (array) / None (scalar) past w_max."""
    scalar = np.isscalar(X)
    X = np.asarray(X, dtype=np.float64)
    CL, p = params.CL, params.p
    with np.errstate(divide="ignore"):
        w = np.floor(p * np.log2(CL / X)) + 1.0
    w = np.where(X >= CL, 0.0, w)
    # repair floating-point edge cases so the band condition holds exactly
    lo = CL / np.exp2(w / p)
    hi = CL / np.exp2((w - 1.0) / p)
    pos = w > 0
    w = np.where(pos & (X <= lo), w + 1.0, w)
    w = np.where(pos & (X > hi) & (w > 1), w - 1.0, w)
    w = w.astype(np.int64)
    w = np.where(w > params.w_max, -1, w)
    if scalar:
        v = int(w)
        return None if v < 0 else v
    return w


def quantile_estimate(values, k):
    """The (k/2)-th largest of ``values`` after padding with zeros up to length k."""
    k = int(k)
    if k % 2:
        raise ValueError("k must be even")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size < k:
        v = np.concatenate([v, np.zeros(k - v.size)])
    j = k // 2
    return float(-np.partition(-v, j - 1)[j - 1])


def quantize(v, eps):
    """Exponent floor(log v / log(1+eps)) as used by the top-k heap."""
    return np.floor(np.log(np.asarray(v, dtype=np.float64)) / math.log1p(eps)).astype(np.int64)


def dequantize(e, eps):
    return np.exp(np.asarray(e, dtype=np.float64) * math.log1p(eps))
