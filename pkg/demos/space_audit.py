"""How peak memory grows as eps shrinks.

Run:  python demos/space_audit.py

A coarse eps grid keeps this quick; ``streammoments run --audit-space``
runs the full grid down to eps = 0.05.
"""

from streammoments.harness import audit_space


def main():
    rows, exponent = audit_space(p=1.5, n=1024, m=100_000, eps_grid=(0.4, 0.2, 0.1))
    for r in rows:
        print(r)
    print(f"fitted exponent of 1/eps: {exponent:.2f}")


if __name__ == "__main__":
    main()
