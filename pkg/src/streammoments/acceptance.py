"""Acceptance checks, one function per criterion.

Each ``criterion_N`` returns a ``Check``: whether it passed, plus the
measured quantities.  The CLI (``streammoments accept``) and the test suite
both call these functions, so a criterion is defined in exactly one place.
"""

import ast
import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .common import FAIL, derive_seed
from .derandomizer import DeterministicFp, DetConfig, PrefixLedger, extract_bits
from .f2 import RandF2, choose_block_size
from .fp import HHR, hhr_run
from .harness import (ExperimentSpec, audit_space, naive_table_bits,
                      run_experiment, wilson_interval)
from .hashing import PInverseSampler, quantile_estimate
from .sketches import (BoundedCountSketch, L2HeavyHitters, MisraGries,
                       TurnstileFp)
from .stream import (Cursor, GeneratorSpec, Stream, exact_moment, generate,
                     subsample_band, make_rng, planted_mixture_counts, shuffle,
                     stream_from_counts, subsample_positions, zipf_counts)


@dataclass
class Check:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        facts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number}: {self.title} ({facts}; {self.seconds:.1f}s)"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number, title, fn):
    t = time.perf_counter()
    passed, details = fn()
    return Check(number, title, bool(passed), details, time.perf_counter() - t)


# ------------------------------------------------------------------ F2

def f2_stream():
    """n = 100, m = 10^4 Zipf(1.0) profile used by the F_2 checks."""
    return stream_from_counts(zipf_counts(100, 10_000, 1.0), 100)


def criterion_1(shuffles=10_000, eps=0.1, delta=0.1, seed=1):
    def body():
        s = f2_stream()
        F2 = exact_moment(s, 2)
        b = choose_block_size(eps, delta, s.n)
        ys = np.empty(shuffles)
        for j in range(shuffles):
            est = RandF2(b, s.n)
            est.update_many(shuffle(s, seed + j).updates)
            ys[j] = est.finalize()
        bias = abs(ys.mean() - F2) / F2
        heavy = F2 >= s.m * math.log2(s.n)
        return heavy and bias <= 0.01, {"F2": F2, "mean_Y": float(ys.mean()),
                                        "rel_bias": bias, "b": b}
    start = time.perf_counter()
    c = _timed(1, "F2 unbiasedness", body)
    c.passed = c.passed and time.perf_counter() - start <= 120
    return c


def criterion_2(shuffles=1000, eps=0.1, delta=0.1, seed=20_000):
    def body():
        s = f2_stream()
        F2 = exact_moment(s, 2)
        b = choose_block_size(eps, delta, s.n)
        hits = 0
        for j in range(shuffles):
            est = RandF2(b, s.n)
            est.update_many(shuffle(s, seed + j).updates)
            hits += abs(est.finalize() - F2) <= eps * F2
        rate = hits / shuffles
        exact_ok = True
        for ids in (np.full(4000, 7), np.arange(1, 4001)):
            st = Stream(ids, 4000)
            est = RandF2(b, st.n)
            est.update_many(st.updates)
            exact_ok &= est.finalize() == exact_moment(st, 2)
        return rate >= 0.85 and exact_ok, {"rate": rate, "b": b, "exact_cases": exact_ok}
    return _timed(2, "F2 concentration", body)


# ------------------------------------------------------------ p-inverse

def criterion_3(samples=1_000_000, seed=3):
    def body():
        worst = 0.0
        k = 1000
        items = np.arange(1, samples // k + 1)
        for j, p in enumerate((0.5, 1.0, 1.5)):
            X = PInverseSampler(p, k, derive_seed(seed, j), items.size + 1).matrix(items).ravel()
            for x in (2, 4, 8, 16):
                q = x ** -p
                emp = float(np.mean(X >= x))
                sigma = math.sqrt(q * (1 - q) / X.size)
                worst = max(worst, abs(emp - q) / sigma)
        return worst <= 3.0, {"max_sigma": worst}
    start = time.perf_counter()
    c = _timed(3, "p-inverse tail law", body)
    c.passed = c.passed and time.perf_counter() - start <= 30
    return c


def criterion_4(trials=500, k=2560, eps=0.25, seed=4):
    def body():
        f = np.array([1.0, 2.0, 3.0])
        F1 = f.sum()
        joint = within = 0
        for t in range(trials):
            X = PInverseSampler(1.0, k, derive_seed(seed, t), 4).matrix([1, 2, 3])
            v = (X * f[:, None]).ravel()
            up = np.count_nonzero(v >= 2 * (1 - eps) * F1)
            over = np.count_nonzero(v >= 2 * (1 + eps) * F1)
            joint += up >= k // 2 and over < k // 2
            R = quantile_estimate(v, k)
            within += 2 * (1 - eps) * F1 <= R <= 2 * (1 + eps) * F1
        a, b = joint / trials, within / trials
        return a >= 0.85 and b >= 0.87, {"joint": a, "within": b}
    return _timed(4, "quantile estimator", body)


# ------------------------------------------------------------------ HHR

def criterion_5(shuffles=200, n=1024, m=1_000_000, seed=5):
    def body():
        rates = {}
        for p in (0.5, 1.5):
            counts = planted_mixture_counts(n, m, p, 0.6)
            base = stream_from_counts(counts, n)
            Fp = exact_moment(base, p)
            hits = 0
            for j in range(shuffles):
                s = shuffle(base, derive_seed(seed, j))
                out = hhr_run(p, 0.5, m, Fp, Cursor(s), n, seed=derive_seed(seed, 1, j))
                hits += out is not FAIL and 1 in out
            rates[p] = hits / shuffles
        # a single-item stream: m1 falls back to its polylog floor
        h = HHR(0.5, 0.5, m, float(m) ** 0.5, n)
        short = Stream(np.ones(h.t * h.m1 - 1, dtype=np.uint64), n)
        fails = hhr_run(0.5, 0.5, m, float(m) ** 0.5, Cursor(short), n) is FAIL
        ok = all(r >= 0.95 for r in rates.values()) and fails
        return ok, {"rate_p0.5": rates[0.5], "rate_p1.5": rates[1.5], "short_fails": fails}
    return _timed(5, "HHR recovery", body)


# --------------------------------------------------------- sketch contracts

def misra_gries_violations(max_len=6, items=3):
    bad = 0
    for length in range(max_len + 1):
        for seq in itertools.product(range(1, items + 1), repeat=length):
            for slots in (1, 2, 3):
                mg = MisraGries(1.0 / slots)
                for a in seq:
                    mg.update(a)
                f = np.bincount(seq, minlength=items + 1) if seq else np.zeros(items + 1)
                for i in range(1, items + 1):
                    est = mg.table.get(i, 0)
                    if not (f[i] - length / (slots + 1) <= est <= f[i]):
                        bad += 1
                    if f[i] > length / (slots + 1) and i not in mg.query():
                        bad += 1
    return bad


def bcs_monotone_violations(max_len=4, keys=3):
    bad = 0
    for length in range(1, max_len + 1):
        for seq in itertools.product(range(1, keys + 1), repeat=length):
            cs = BoundedCountSketch(3, 2, 1, seed=9)
            batch = BoundedCountSketch(3, 2, 1, seed=9)
            prev_inf = np.zeros_like(cs.inf)
            prev_q = np.zeros(keys, dtype=bool)
            for a in seq:
                cs.update(a)
                if np.any(prev_inf & ~cs.inf):
                    bad += 1
                q = np.isinf(cs.query_many(np.arange(1, keys + 1)))
                bad += int(np.any(prev_q & ~q))
                prev_inf, prev_q = cs.inf.copy(), q
            batch.update_many(list(seq))
            bad += int(not np.array_equal(batch.inf, cs.inf))
    return bad


def criterion_6(trials=200, delta=0.1, seed=6):
    def body():
        mg_bad = misra_gries_violations()
        bcs_bad = bcs_monotone_violations()
        rng = make_rng(seed)
        hits = 0
        for t in range(trials):
            bg = rng.integers(2, 2001, size=20_000)
            s = np.concatenate([bg, np.ones(3000, dtype=np.int64)])
            rng.shuffle(s)
            hh = L2HeavyHitters(0.25, delta, derive_seed(seed, t), n=2000)
            hh.update_many(s)
            hits += any(i == 1 for i, _ in hh.query())
        lo, hi = wilson_interval(hits, trials)
        l2_ok = hi >= 1 - delta
        turn = {}
        for p in (0.5, 1.5):
            ok = 0
            for t in range(trials):
                sk = TurnstileFp(p, 0.25, delta, derive_seed(seed, 100, t), n=64)
                sk.update_many([5], [300])
                ok += abs(sk.query() / 300 ** p - 1) <= 0.25
            turn[p] = ok / trials
        turn_ok = all(wilson_interval(round(r * trials), trials)[1] >= 1 - delta
                      for r in turn.values())
        return (mg_bad == 0 and bcs_bad == 0 and l2_ok and turn_ok,
                {"mg_violations": mg_bad, "bcs_violations": bcs_bad,
                 "l2hh_rate": hits / trials, "turnstile_p0.5": turn[0.5],
                 "turnstile_p1.5": turn[1.5]})
    return _timed(6, "sketch contracts", body)


# ------------------------------------------------------------ end to end

def mixture_spec(algo, p, trials, seed):
    gen = GeneratorSpec("mixture", 1024, 1_000_000, seed=0, skew=1.0)
    return ExperimentSpec(algo=algo, p=p, eps=0.25, delta=0.1, trials=trials,
                          seed=seed, gen=gen, share=0.3)


def criterion_7(trials=100, seed=700):
    def body():
        start = time.perf_counter()
        rates = {}
        for p in (0.5, 1.5):
            rows = run_experiment(mixture_spec("fprand", p, trials, seed))
            rates[p] = rows[-1]["estimate"]
        secs = time.perf_counter() - start
        ok = all(r >= 0.80 for r in rates.values()) and secs <= 600
        return ok, {"rate_p0.5": rates[0.5], "rate_p1.5": rates[1.5], "seconds": secs}
    return _timed(7, "RndFp end to end", body)


def criterion_8(seed=8):
    def body():
        rows, exponent = audit_space(p=1.5, n=1024, m=200_000, seed=seed)
        big = generate(GeneratorSpec("zipf", 1 << 20, 200_000, seed=seed, skew=1.5))
        naive = naive_table_bits(big.n, big.m)
        peaks = {}
        from .fp import FpConfig, RndFp
        for p in (0.5, 1.5):
            r = RndFp(p, 0.1, 0.1, big.n, seed=derive_seed(seed, 1),
                      config=FpConfig.calibrated(p, 0.1, 0.1, big.n))
            r.run(big)
            peaks[p] = r.peak_bits
        ok = 1.6 <= exponent <= 2.4 and all(v < naive for v in peaks.values())
        return ok, {"exponent": exponent, "peak_p0.5": peaks[0.5],
                    "peak_p1.5": peaks[1.5], "naive": naive}
    return _timed(8, "space scaling", body)


# ---------------------------------------------------------- derandomizer

RNG_NAMES = {"random", "default_rng", "Generator", "PCG64", "SeedSequence",
             "make_rng", "shuffle", "permutation", "choice", "randint",
             "integers", "secrets", "urandom", "RandomState"}


def rng_audit(path=None):
    """Names in a module's source that could reach a random number generator."""
    path = Path(path or Path(__file__).with_name("derandomizer.py"))
    tree = ast.parse(path.read_text())
    hits = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Attribute) and node.attr in RNG_NAMES:
            hits.append(node.attr)
        elif isinstance(node, ast.Name) and node.id in RNG_NAMES:
            hits.append(node.id)
        elif isinstance(node, (ast.Import, ast.ImportFrom)):
            names = [a.name for a in node.names]
            mod = getattr(node, "module", None) or ""
            if {"random", "secrets"} & set(names + [mod]) or any(n in RNG_NAMES for n in names):
                hits.extend(names)
    return hits


def extraction_tv(frac=None, delta=0.1):
    """Exact total-variation distance from uniform of the extracted bits.

    Enumerates every distinct order of the stream holding items 1..4 twice.
    """
    frac = DetConfig(p=1.0, eps=0.25, delta=delta).l_frac if frac is None else frac
    base = (1, 1, 2, 2, 3, 3, 4, 4)
    orders = set(itertools.permutations(base))
    dist = {}
    size = None
    for order in orders:
        led = PrefixLedger(4, 4)
        led.feed(np.array(order))
        bits = extract_bits(led, frac).bits
        size = len(bits)
        dist[bits] = dist.get(bits, 0) + 1
    total = len(orders)
    tv = 0.5 * sum(abs(dist.get(b, 0) / total - 2.0 ** -size)
                   for b in itertools.product((0, 1), repeat=size))
    return tv, size, total


def criterion_9(trials=100, seed=900, delta=0.1):
    def body():
        audit = rng_audit()
        tv, size, orders = extraction_tv(delta=delta)
        s = shuffle(stream_from_counts(planted_mixture_counts(1024, 200_000, 0.5, 0.3), 1024), 1)
        a = DeterministicFp(0.5, 0.25, delta, 1024).run(s)
        b = DeterministicFp(0.5, 0.25, delta, 1024).run(s)
        replay = float(a).hex() == float(b).hex()
        rates = {}
        for p in (0.5, 1.5):
            rows = run_experiment(mixture_spec("fpdet", p, trials, seed))
            rates[p] = rows[-1]["estimate"]
        ok = (not audit and tv <= delta / 20 and replay
              and all(r >= 0.75 for r in rates.values()))
        return ok, {"rng_names": len(audit), "tv": tv, "tv_limit": delta / 20,
                    "bits": size, "replay": replay, "rate_p0.5": rates[0.5],
                    "rate_p1.5": rates[1.5]}
    return _timed(9, "derandomizer", body)


# ------------------------------------------------------- subsample oracles

def subsample_violations(deltas=(0.1, 0.01), samples=10_000, k=1000, seed=10):
    """Violation rates of the single-item and item-set subsample bands."""
    counts = zipf_counts(100, 10_000, 1.0)
    s = stream_from_counts(counts, 100, seed=seed)
    arr = s.updates.astype(np.int64)
    m = arr.size
    heavy, mid = 1, 10
    subset = np.zeros(101, dtype=bool)
    subset[1:101:3] = True          # a fixed set of items for the F_1 band
    rng = make_rng(seed)
    item_hits = {d: 0 for d in deltas}
    set_hits = {d: 0 for d in deltas}
    for _ in range(samples):
        sub = arr[subsample_positions(m, k, rng)]
        for j in (heavy, mid):
            fj = counts[j - 1]
            dev = abs(np.count_nonzero(sub == j) / k - fj / m)
            for d in deltas:
                item_hits[d] += dev >= subsample_band(fj, m, k, d)
        Fa = int(counts[subset[1:]].sum())
        dev = abs(np.count_nonzero(subset[sub]) / k - Fa / m)
        for d in deltas:
            set_hits[d] += dev >= subsample_band(Fa, m, k, d)
    item = {d: item_hits[d] / (2 * samples) for d in deltas}
    sets = {d: set_hits[d] / samples for d in deltas}
    return item, sets


def f2_subsample_mean(samples=10_000, k=1000, seed=11):
    counts = zipf_counts(100, 10_000, 1.0)
    s = stream_from_counts(counts, 100, seed=seed)
    arr = s.updates.astype(np.int64)
    m = arr.size
    F2 = float(np.sum(counts.astype(np.float64) ** 2))
    rng = make_rng(seed)
    vals = np.empty(samples)
    for t in range(samples):
        sub = arr[subsample_positions(m, k, rng)]
        vals[t] = np.sum(np.bincount(sub).astype(np.float64) ** 2)
    bound = k + k * k / (m * m) * F2
    sigma = vals.std(ddof=1) / math.sqrt(samples)
    return float(vals.mean()), bound, sigma


def criterion_10(seed=10):
    def body():
        item, sets = subsample_violations(seed=seed)
        mean, bound, sigma = f2_subsample_mean(seed=seed + 1)
        ok = (all(item[d] <= 2 * d for d in item) and all(sets[d] <= 2 * d for d in sets)
              and mean <= bound + 3 * sigma)
        return ok, {"item_0.1": item[0.1], "item_0.01": item[0.01],
                    "set_0.1": sets[0.1], "set_0.01": sets[0.01],
                    "f2_mean": mean, "f2_bound": bound}
    return _timed(10, "subsample oracles", body)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run(numbers=None, echo=print):
    checks = []
    for i in numbers or sorted(CRITERIA):
        c = CRITERIA[i]()
        echo(c.line())
        checks.append(c)
    return checks
