"""Compare the numba kernels against the numpy fallback.

Both backends consume the same counter-based random stream, so the KLM rows
also confirm that the two paths return identical results.

    python benchmarks/bench_backends.py --ns 20 50 100 200 --repeats 3
"""
import argparse
import json

from dnfcount.harness.bench import compare_backends


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[20, 50, 100, 200])
    ap.add_argument("--enum-ns", type=int, nargs="+", default=[12, 16, 18])
    ap.add_argument("--width", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)

    rows = compare_backends(args.ns, args.enum_ns, args.width, args.repeats, args.seed)
    print(f"{'task':<12} {'n':>5} {'numba s':>10} {'numpy s':>10} {'speedup':>8}  same")
    for r in rows:
        print(f"{r.task:<12} {r.size:>5} {r.numba_seconds:>10.4f} {r.numpy_seconds:>10.4f} "
              f"{r.speedup:>8.1f}  {r.identical}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([dict(vars(r), speedup=r.speedup) for r in rows], fh, indent=2)
    return 0 if all(r.identical for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
