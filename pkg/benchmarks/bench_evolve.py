#!/usr/bin/env python3
"""Benchmark of the two evolution lanes: compiled kernel vs pure Python.

Both lanes consume the same random stream and produce bit-identical records,
so the comparison is apples-to-apples.  The event count reported is the sum
of grid crossings and branch events actually processed.

Usage:
    python3 benchmarks/bench_evolve.py [--reps 20] [--T 20 60] [--skip-python]
"""

import argparse
import time

import numpy as np

import occufluct as oc
from occufluct.branching import HAVE_EXT


def count_events(rec, gamma, T):
    grid_hits = int(rec.counts[1:].sum())
    branch_events = int(round(gamma * T * rec.counts.mean()))
    return grid_hits + branch_events


def bench(impl, params, phi, reps, seed):
    t0 = time.perf_counter()
    events = 0
    for rep in range(reps):
        rec = oc.evolve(params, phi, oc.rep_rng(seed, rep), impl=impl)
        events += count_events(rec, params.gamma, params.T)
    return time.perf_counter() - t0, events


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--T", type=float, nargs="+", default=[10.0, 20.0, 60.0])
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--seed", type=int, default=20260810)
    ap.add_argument("--skip-python", action="store_true",
                    help="time only the compiled lane")
    args = ap.parse_args()

    phi = oc.TestFunction.unit_bump()
    sigma = oc.SigmaProfile.interval(0.5, -1.0, 1.0)
    print(f"compiled kernel available: {HAVE_EXT}")
    header = f"{'T':>6} {'lane':>8} {'wall s':>9} {'Mevents/s':>11} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for T in args.T:
        params = oc.ModelParams(args.alpha, 1.0, sigma, T,
                                oc.default_window(phi, args.alpha, T), 0.25)
        rows = {}
        lanes = (["cython"] if HAVE_EXT else []) + ([] if args.skip_python else ["python"])
        for impl in lanes:
            wall, events = bench(impl, params, phi, args.reps, args.seed)
            rows[impl] = (wall, events)
        base = rows.get("python", rows.get("cython"))[0]
        for impl, (wall, events) in rows.items():
            speed = events / wall / 1e6
            print(f"{T:6g} {impl:>8} {wall:9.3f} {speed:11.2f} {base / wall:7.1f}x")
        if "cython" in rows and "python" in rows:
            a = oc.evolve(params, phi, oc.rep_rng(args.seed, 0), impl="cython")
            b = oc.evolve(params, phi, oc.rep_rng(args.seed, 0), impl="python")
            tag = "bit-identical" if np.array_equal(a.values, b.values) else "MISMATCH"
            print(f"{'':6} lanes {tag}")


if __name__ == "__main__":
    main()
