"""Experiment driver: trials over seeded shuffles, bit accounting and CSV output."""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .common import derive_seed, is_fail, width_bits
from .derandomizer import DeterministicFp
from .f2 import RandF2, choose_block_size
from .fp import FpConfig, RndFp
from .stream import (GeneratorSpec, exact_moment, generate,
                     planted_mixture_counts, read_stream, shuffle,
                     stream_from_counts)

SCHEMA = "streammoments.trials/1"
COLUMNS = ["trial", "seed", "estimate", "exact", "relerr", "bits_peak",
           "updates_consumed_by_hhr", "failed", "ci_low", "ci_high"]
ALGOS = ("f2rand", "fprand", "fpdet", "oracle")


class BitBudget:
    """Tree of named structures with live and peak bit counts.

    A node with children reports the sum of its children (plus anything
    recorded on the node itself); its peak is the largest such sum seen.
    """

    def __init__(self, name="total", parent=None):
        self.name = name
        self.parent = parent
        self.children = {}
        self.own = 0
        self.live = 0
        self.peak = 0

    def child(self, name):
        if name not in self.children:
            self.children[name] = BitBudget(name, self)
        return self.children[name]

    def record(self, bits):
        """Set the live bits of this node and refresh every ancestor."""
        if bits < 0:
            raise ValueError("bit counts are nonnegative")
        self.own = int(bits)
        node = self
        while node is not None:
            node.live = node.own + sum(c.live for c in node.children.values())
            node.peak = max(node.peak, node.live)
            node = node.parent

    def release(self):
        self.record(0)

    def rollup(self):
        """Nested dict of (live, peak) per node."""
        out = {"live": self.live, "peak": self.peak}
        if self.children:
            out["children"] = {k: c.rollup() for k, c in self.children.items()}
        return out


def naive_table_bits(n, m):
    """One counter of ceil(log2(m+1)) bits for every item of the universe."""
    return int(n) * width_bits(max(int(m), 1))


def wilson_interval(successes, trials, conf=0.95):
    if trials <= 0:
        raise ValueError("need at least one trial")
    z = float(norm.ppf(0.5 + conf / 2.0))
    ph = successes / trials
    den = 1.0 + z * z / trials
    mid = (ph + z * z / (2 * trials)) / den
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def thread_count():
    raw = os.environ.get("STREAMMOMENTS_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"STREAMMOMENTS_THREADS must be an integer, got {raw!r}")


@dataclass
class ExperimentSpec:
    algo: str
    p: float = 1.0
    eps: float = 0.25
    delta: float = 0.1
    trials: int = 1
    seed: int = 0
    gen: GeneratorSpec = None
    input: str = None
    out: str = None
    copies: int = None
    share: float = 0.3          # planted share for the "mixture" generator
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if (self.gen is None) == (self.input is None):
            raise ValueError("give exactly one of a generator or an input file")
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise ValueError("need 0 < eps < 1 and 0 < delta < 1")
        if self.algo == "f2rand" and self.p != 2:
            self.p = 2.0
        if self.algo in ("fprand", "fpdet") and not (0 < self.p < 2):
            raise ValueError("F_p estimation needs 0 < p < 2")

    def tolerance(self):
        if self.algo == "oracle":
            return 0.0
        if self.algo == "f2rand":
            return self.eps
        return self.p * self.eps * (1 + self.eps)


def build_stream(spec):
    if spec.input is not None:
        return read_stream(spec.input)
    g = spec.gen
    if g.kind == "mixture":
        counts = planted_mixture_counts(g.n, g.m, spec.p, spec.share, g.skew)
        return stream_from_counts(counts, g.n, g.seed)
    return generate(g)


def _trial(spec, base, exact, trial):
    seed = spec.seed + trial
    s = shuffle(base, seed)
    algo_seed = derive_seed(seed, 7)
    hhr = 0
    failed = False
    if spec.algo == "oracle":
        est, bits = exact_moment(s, spec.p), naive_table_bits(s.n, s.m)
    elif spec.algo == "f2rand":
        b = choose_block_size(spec.eps, spec.delta, s.n)
        f2 = RandF2(b, s.n)
        f2.update_many(s.updates)
        est, bits = f2.finalize(), f2.bits()
    elif spec.algo == "fprand":
        cfg = FpConfig.calibrated(spec.p, spec.eps, spec.delta, s.n, **spec.extra)
        r = RndFp(spec.p, spec.eps, spec.delta, s.n, seed=algo_seed, config=cfg,
                  copies=spec.copies)
        est = r.run(s)
        bits, hhr = r.peak_bits, r.hhr_consumed()
    else:
        d = DeterministicFp(spec.p, spec.eps, spec.delta, s.n)
        est = d.run(s)
        bits = d.peak_bits
        if d.rnd is not None:
            hhr = d.rnd.hhr_consumed()
    if is_fail(est):
        failed, est = True, float("nan")
    relerr = (est - exact) / exact if exact else (0.0 if est == 0 else float("inf"))
    return {"trial": trial, "seed": seed, "estimate": float(est), "exact": float(exact),
            "relerr": float(relerr), "bits_peak": int(bits),
            "updates_consumed_by_hhr": int(hhr), "failed": int(failed)}


def run_experiment(spec):
    """Rows (one per trial, ordered by seed) followed by a summary row."""
    spec.validate()
    base = build_stream(spec)
    exact = exact_moment(base, spec.p)
    work = range(spec.trials)
    threads = min(thread_count(), spec.trials)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(lambda t: _trial(spec, base, exact, t), work))
    else:
        rows = [_trial(spec, base, exact, t) for t in work]
    tol = spec.tolerance()
    ok = sum(1 for r in rows if not r["failed"] and abs(r["relerr"]) <= tol + 1e-12)
    lo, hi = wilson_interval(ok, len(rows))
    rows.append({"trial": "summary", "seed": spec.seed, "estimate": ok / len(rows),
                 "exact": float(exact), "relerr": tol,
                 "bits_peak": max(r["bits_peak"] for r in rows),
                 "updates_consumed_by_hhr": max(r["updates_consumed_by_hhr"] for r in rows),
                 "failed": sum(r["failed"] for r in rows), "ci_low": lo, "ci_high": hi})
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            fh.write(to_csv(rows))
    return rows


def to_csv(rows):
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}\n")
    w = csv.DictWriter(buf, fieldnames=COLUMNS, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def summary(rows):
    return rows[-1]


# ------------------------------------------------------------- space audit

EPS_GRID = (0.4, 0.2, 0.1, 0.05)


def audit_space(p=1.5, n=1024, m=200_000, eps_grid=EPS_GRID, seed=1, skew=1.1,
                delta=0.1, stream=None):
    """Peak bits of RndFp across an eps grid on one fixed stream.

    Returns (rows, exponent): one row per eps plus an f2rand row and the
    exempt oracle row; ``exponent`` is the least-squares slope of log(bits)
    against log(1/eps).
    """
    if stream is None:
        stream = generate(GeneratorSpec("zipf", n, m, seed=seed, skew=skew))
    n, m = stream.n, stream.m
    rows = []
    for eps in eps_grid:
        cfg = FpConfig.calibrated(p, eps, delta, n)
        r = RndFp(p, eps, delta, n, seed=derive_seed(seed, 3), config=cfg)
        est = r.run(stream)
        rows.append({"algo": "fprand", "eps": eps, "bits_peak": r.peak_bits,
                     "estimate": float(est), "exact": exact_moment(stream, p)})
    x = np.log([1.0 / r["eps"] for r in rows])
    y = np.log([r["bits_peak"] for r in rows])
    exponent = float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else float("nan")
    b = choose_block_size(0.1, delta, n)
    f2 = RandF2(b, n)
    f2.update_many(stream.updates)
    rows.append({"algo": "f2rand", "eps": 0.1, "bits_peak": f2.bits(),
                 "reference": 2 * b * math.log2(n)})
    rows.append({"algo": "oracle", "eps": 0.0, "bits_peak": naive_table_bits(n, m),
                 "exempt": True})
    return rows, exponent

