"""The estimator that takes its randomness from the order of the stream.

Run:  python demos/deterministic.py

We walk one stream through the phases: the stored prefix, the prime picked
from first-arrival parities, the seed handed to the randomized estimator,
and the query path that answered.  Running it twice gives the same bits.
"""

from streammoments import DeterministicFp, exact_moment, shuffle
from streammoments.stream import planted_mixture_counts, stream_from_counts


def main(p=0.5, n=1024):
    for m in (2_000, 200_000, 1_000_000):
        s = shuffle(stream_from_counts(planted_mixture_counts(n, m, p, 0.3), n), 7)
        d = DeterministicFp(p, 0.25, 0.1, n)
        est = d.run(s)
        exact = exact_moment(s, p)
        print(f"m={m}: path={d.path}, relerr {(est - exact) / exact:+.4f}, peak {d.peak_bits} bits")
        print(f"  prefix of {d.cfg.t} distinct items ended at position {d.ledger.s1}")
        if d.q is not None:
            print(f"  prime q={d.q} from {len(d.prime_bits)} parity bits")
        if d.seed is not None:
            print(f"  seed of {d.seed.length} bits, randomized phase from update {d.handoff}")
        again = DeterministicFp(p, 0.25, 0.1, n).run(s)
        print(f"  replay identical: {float(est).hex() == float(again).hex()}")


if __name__ == "__main__":
    main()
