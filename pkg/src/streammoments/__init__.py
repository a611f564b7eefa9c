"""Frequency moment estimation over randomly ordered insertion streams.

The main entry points:

* ``RandF2``: F_2 from the collision count of consecutive blocks.
* ``RndFp``: F_p for 0 < p < 2 in a single pass over a random-order stream.
* ``DeterministicFp``: the same estimate with no internal randomness; the
  seed is read off the order of the stream itself.
"""

from .common import FAIL, is_fail
from .derandomizer import DeterministicFp, deterministic_fp
from .f2 import RandF2, choose_block_size, estimate_f2
from .fp import FpConfig, HHR, RndFp
from .stream import GeneratorSpec, Stream, exact_moment, generate, shuffle

__all__ = ["FAIL", "is_fail", "DeterministicFp", "deterministic_fp", "RandF2",
           "choose_block_size", "estimate_f2", "FpConfig", "HHR", "RndFp",
           "GeneratorSpec", "Stream", "exact_moment", "generate", "shuffle"]
