"""One pass of the randomized F_p estimator on a planted mixture.

Run:  python demos/fp_pipeline.py

Item 1 carries 30% of F_p and a Zipf background carries the rest.  For each
p we run a handful of random orders and report the relative error, the peak
bits of the sketch, and how many updates the heavy-hitter search used.
"""

from streammoments import FpConfig, RndFp, exact_moment, shuffle
from streammoments.harness import naive_table_bits
from streammoments.stream import planted_mixture_counts, stream_from_counts


def main(m=1_000_000, n=1024, eps=0.25):
    for p in (0.5, 1.5):
        base = stream_from_counts(planted_mixture_counts(n, m, p, 0.3), n)
        exact = exact_moment(base, p)
        cfg = FpConfig.calibrated(p, eps, 0.1, n)
        print(f"p={p}: exact F_p = {exact:.4g}, tolerance {p * eps * (1 + eps):.3f}")
        for seed in range(3):
            r = RndFp(p, eps, 0.1, n, seed=seed, config=cfg)
            est = r.run(shuffle(base, seed))
            print(f"  order {seed}: relerr {(est - exact) / exact:+.3f}, "
                  f"peak {r.peak_bits} bits, heavy-hitter search read {r.hhr_consumed()} updates")
        print(f"  a counter per item would take {naive_table_bits(n, m)} bits")


if __name__ == "__main__":
    main()
