"""Block-pair F_2 estimation on a shuffled Zipf stream.

Run:  python demos/f2_blocks.py

The estimator keeps one block of b updates at a time.  Each block's
colliding pairs are counted exactly, and the running total is rescaled
at the end.  We compare the estimates against the exact F_2 over a few
hundred random orders, and show how much memory a block takes.
"""

import numpy as np

from streammoments import RandF2, choose_block_size, exact_moment, shuffle
from streammoments.stream import stream_from_counts, zipf_counts


def main():
    s = stream_from_counts(zipf_counts(100, 10_000, 1.0), 100)
    F2 = exact_moment(s, 2)
    for eps in (0.3, 0.1):
        b = choose_block_size(eps, 0.1, s.n)
        ys = []
        for seed in range(300):
            est = RandF2(b, s.n)
            est.update_many(shuffle(s, seed).updates)
            ys.append(est.finalize())
        ys = np.array(ys)
        err = np.abs(ys - F2) / F2
        print(f"eps={eps}: block size {b}, {RandF2(b, s.n).bits()} bits")
        print(f"  mean/F2 = {ys.mean() / F2:.4f}, within eps in {np.mean(err <= eps):.0%} of orders")


if __name__ == "__main__":
    main()
