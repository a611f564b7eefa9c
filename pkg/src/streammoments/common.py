"""Small shared pieces: the Fail outcome and seed derivation."""

import numpy as np


class _Fail:
    """Distinguished outcome for a structure that cannot answer."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "Fail"

    def __bool__(self):
        return False


FAIL = _Fail()


def is_fail(x):
    return x is FAIL


def derive_seed(*parts):
    """Deterministic 63-bit child seed from integer parts."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def width_bits(x):
    """Bits needed to store a nonnegative integer up to x."""
    return max(1, int(x).bit_length())
