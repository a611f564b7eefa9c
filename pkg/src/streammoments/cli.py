"""Command line front end.

    streammoments f2rand --epsilon 0.1 --delta 0.1 --gen zipf --n 100 --m 10000 --trials 50
    streammoments fprand --p 1.5 --epsilon 0.25 --gen mixture --n 1024 --m 1000000
    streammoments fpdet  --p 0.5 --input stream.bin --csv-out det.csv
    streammoments run --algo oracle --p 2 --gen uniform --n 50 --m 1000
    streammoments run --audit-space --p 1.5 --n 1024 --m 200000
    streammoments gen --gen zipf --n 1024 --m 100000 --out stream.bin --binary
    streammoments accept 1 2 3

Exit status: 0 on success, 2 when an acceptance check or a requested
success-rate floor is not met, 1 on any error.
"""

import argparse
import csv
import io
import sys

from . import acceptance
from .harness import (SCHEMA, ExperimentSpec, audit_space, run_experiment,
                      to_csv)
from .stream import GeneratorSpec, generate, write_binary, write_text

OK, ERROR, NOT_MET = 0, 1, 2
GEN_KINDS = ("uniform", "zipf", "planted-heavy", "mixture")


def _experiment_flags(ap, algo_choice=False):
    if algo_choice:
        ap.add_argument("--algo", choices=("f2rand", "fprand", "fpdet", "oracle"))
        ap.add_argument("--audit-space", action="store_true",
                        help="run the eps-grid space audit instead of trials")
    ap.add_argument("--p", type=float, default=1.0)
    ap.add_argument("--epsilon", type=float, default=0.25)
    ap.add_argument("--delta", type=float, default=0.1)
    _stream_flags(ap)
    ap.add_argument("--seed", type=int, default=0, help="base seed; trial j uses seed+j")
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--copies", type=int, default=None,
                    help="independent copies combined by the median (fprand)")
    ap.add_argument("--csv-out", default=None, help="write CSV here instead of stdout")
    ap.add_argument("--min-rate", type=float, default=None,
                    help="exit with status 2 if the success rate falls below this")


def _stream_flags(ap):
    ap.add_argument("--gen", choices=GEN_KINDS, default=None)
    ap.add_argument("--input", default=None, help="text or binary stream file")
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--m", type=int, default=100_000)
    ap.add_argument("--skew", type=float, default=1.0)
    ap.add_argument("--share", type=float, default=0.3,
                    help="F_p share of the planted item (mixture generator)")
    ap.add_argument("--heavy-freq", type=int, default=0)
    ap.add_argument("--stream-seed", type=int, default=0,
                    help="seed of the generated multiset (before shuffling)")


def build_parser():
    ap = argparse.ArgumentParser(prog="streammoments",
                                 description="Frequency moments of random-order streams")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("f2rand", "fprand", "fpdet"):
        _experiment_flags(sub.add_parser(name, help=f"trials of {name}"))
    _experiment_flags(sub.add_parser("run", help="generic harness run"), algo_choice=True)

    g = sub.add_parser("gen", help="write a generated stream to a file")
    _stream_flags(g)
    g.add_argument("--p", type=float, default=1.0, help="moment used to plant the mixture")
    g.add_argument("--out", required=True)
    g.add_argument("--binary", action="store_true")

    acc = sub.add_parser("accept", help="run acceptance checks")
    acc.add_argument("criteria", nargs="*", type=int,
                     help="criterion numbers (default: all)")
    return ap


def _generator(args):
    if args.gen is None:
        return None
    heavy = args.heavy_freq
    background = args.m - heavy if args.gen == "planted-heavy" else 0
    return GeneratorSpec(args.gen, args.n, args.m, seed=args.stream_seed, skew=args.skew,
                         heavy_count=1, heavy_freq=heavy, background=background)


def _spec(args, algo):
    gen = _generator(args)
    if gen is None and args.input is None:
        gen = GeneratorSpec("zipf", args.n, args.m, seed=args.stream_seed, skew=args.skew)
    return ExperimentSpec(algo=algo, p=args.p, eps=args.epsilon, delta=args.delta,
                          trials=args.trials, seed=args.seed, gen=gen, input=args.input,
                          copies=args.copies, share=args.share)


def f2_csv(rows):
    """The F_2 view of harness rows: (trial, Y, exactF2, relerr, bits)."""
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}:f2\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "seed", "Y", "exactF2", "relerr", "bits", "ci_low", "ci_high"])
    for r in rows:
        w.writerow([r["trial"], r["seed"], repr(r["estimate"]), repr(r["exact"]),
                    repr(r["relerr"]), r["bits_peak"], r.get("ci_low", ""),
                    r.get("ci_high", "")])
    return buf.getvalue()


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_trials(args, algo):
    spec = _spec(args, algo)
    rows = run_experiment(spec)
    _emit(f2_csv(rows) if algo == "f2rand" else to_csv(rows), args.csv_out)
    s = rows[-1]
    print(f"{algo}: success rate {s['estimate']:.3f} "
          f"(95% CI {s['ci_low']:.3f}..{s['ci_high']:.3f}) at tolerance {s['relerr']:.4g}, "
          f"peak bits {s['bits_peak']}", file=sys.stderr)
    if args.min_rate is not None and s["estimate"] < args.min_rate:
        return NOT_MET
    return OK


def cmd_audit(args):
    stream = None
    if args.input is not None or args.gen is not None:
        spec = _spec(args, "fprand")
        from .harness import build_stream
        stream = build_stream(spec)
    rows, exponent = audit_space(p=args.p, n=args.n, m=args.m, seed=args.seed,
                                 skew=args.skew, delta=args.delta, stream=stream)
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}:audit exponent={exponent!r}\n")
    keys = ["algo", "eps", "bits_peak", "estimate", "exact", "reference", "exempt"]
    w = csv.DictWriter(buf, fieldnames=keys, restval="", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    _emit(buf.getvalue(), args.csv_out)
    print(f"fitted eps exponent {exponent:.3f}", file=sys.stderr)
    return OK if 1.6 <= exponent <= 2.4 else NOT_MET


def cmd_gen(args):
    gen = _generator(args)
    if gen is None:
        raise ValueError("--gen is required")
    if gen.kind == "mixture":
        from .stream import planted_mixture_counts, stream_from_counts
        s = stream_from_counts(planted_mixture_counts(gen.n, gen.m, args.p, args.share,
                                                      gen.skew), gen.n, gen.seed)
    else:
        s = generate(gen)
    (write_binary if args.binary else write_text)(s, args.out)
    return OK


def cmd_accept(args):
    checks = acceptance.run(args.criteria or None)
    return OK if all(c.passed for c in checks) else NOT_MET


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "accept":
            return cmd_accept(args)
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "run":
            if args.audit_space:
                return cmd_audit(args)
            if args.algo is None:
                raise ValueError("run needs --algo or --audit-space")
            return cmd_trials(args, args.algo)
        return cmd_trials(args, args.command)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
