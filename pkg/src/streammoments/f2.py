"""Block-pair F_2 estimator for random-order streams.

The stream is cut into consecutive blocks of length b.  Inside each block we
count colliding pairs exactly; the collision total K over T complete blocks is
rescaled to an unbiased estimate of F_2.
"""

import math

import numpy as np


class InsufficientData(RuntimeError):
    pass


def choose_block_size(epsilon, delta, n, c_b=8.0):
    if not (0 < epsilon <= 1 and 0 < delta < 1 and n >= 2):
        raise ValueError("need 0 < epsilon <= 1, 0 < delta < 1, n >= 2")
    core = max(1.0 / (epsilon ** 2 * math.log2(n)), 2.0)
    return math.ceil(c_b * core * math.log2(1.0 / delta) - 1e-9)


def block_pairs(block):
    """sum_j C(f_j, 2) over the item counts of one block, via sorting."""
    s = np.sort(np.asarray(block))
    if s.size < 2:
        return 0
    cuts = np.flatnonzero(np.diff(s)) + 1
    runs = np.diff(np.concatenate(([0], cuts, [s.size])))
    return int(np.sum(runs * (runs - 1) // 2))


class RandF2:
    def __init__(self, b, n):
        self.b = int(b)
        self.n = int(n)
        if self.b < 2:
            raise ValueError("block size must be at least 2")
        self.buffer = []
        self.K = 0          # Python int: no overflow
        self.T = 0
        self.m1 = 0

    @classmethod
    def for_accuracy(cls, epsilon, delta, n, c_b=8.0):
        return cls(choose_block_size(epsilon, delta, n, c_b), n)

    def update(self, a):
        self.buffer.append(int(a))
        self.m1 += 1
        if len(self.buffer) == self.b:
            self.K += block_pairs(self.buffer)
            self.T += 1
            self.buffer = []

    def update_many(self, items):
        """Same result as calling ``update`` on each item in turn."""
        items = np.asarray(items, dtype=np.int64).reshape(-1)
        pos = 0
        if self.buffer:
            need = self.b - len(self.buffer)
            for a in items[:need]:
                self.update(a)
            pos = min(need, items.size)
        rest = items[pos:]
        full = rest.size // self.b
        if full:
            # pairs per (block, item) from one sort of block-tagged keys
            tagged = rest[:full * self.b].reshape(full, self.b) \
                + (np.arange(full, dtype=np.int64) * (self.n + 1))[:, None]
            _, runs = np.unique(tagged, return_counts=True)
            self.K += int(np.sum(runs * (runs - 1) // 2))
            self.T += full
            self.m1 += full * self.b
        for a in rest[full * self.b:]:
            self.update(a)

    def finalize(self, m=None):
        if self.T == 0:
            raise InsufficientData("no complete block was observed")
        m = self.m1 if m is None else int(m)
        b = self.b
        return 2.0 * self.K * (m * m - m) / ((b * b - b) * self.T) + m

    def bits(self):
        # the block buffer plus the sorted copy used to count its pairs
        w = max(1, math.ceil(math.log2(self.n)))
        return 2 * self.b * w + 3 * 64

    @staticmethod
    def bit_bound(b, n):
        return 2 * b * math.ceil(math.log2(n)) + 256


def estimate_f2(stream, epsilon, delta, c_b=8.0):
    est = RandF2.for_accuracy(epsilon, delta, stream.n, c_b)
    est.update_many(stream.updates)
    return est.finalize()
