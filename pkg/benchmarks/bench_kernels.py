"""Compiled vs pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--sizes 50 200 400] [--repeat 3]
"""
import argparse
import time

import numpy as np

from emdgeom import _fallback

try:
    from emdgeom import _native
except ImportError:
    _native = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_simplex(n, repeat, rng):
    X, Y = rng.random((n, 2)), rng.random((n, 2))
    a = rng.random(n) + 0.1
    b = rng.random(n) + 0.1
    b *= a.sum() / b.sum()
    rows = []
    for name, mod in (("native", _native), ("python", _fallback)):
        if mod is None:
            continue
        t, out = best_of(lambda: mod.network_simplex(a, b, xs=X, ys=Y, metric=2), repeat)
        r, c, m = out[:3]
        cost = float(m @ np.linalg.norm(X[r] - Y[c], axis=1))
        rows.append((name, t, cost))
    return rows


def bench_extremes(n, repeat, rng):
    A0, A1, B0, B1 = (rng.random((n, 2)) for _ in range(4))  # all n x n pairs
    rows = []
    for name, mod in (("native", _native), ("python", _fallback)):
        if mod is None:
            continue
        t, (lo, hi) = best_of(lambda: mod.segment_pair_extremes(A0, A1, B0, B1, 2), repeat)
        rows.append((name, t, float(lo.sum() + hi.sum())))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 400])
    ap.add_argument("--segments", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<28}{'backend':<9}{'seconds':>10}{'value':>20}")
    for n in args.sizes:
        rows = bench_simplex(n, args.repeat, rng)
        for name, t, v in rows:
            print(f"{f'network_simplex {n}x{n}':<28}{name:<9}{t:>10.4f}{v:>20.12g}")
        if len(rows) == 2:
            print(f"{'':<28}{'speedup':<9}{rows[1][1] / rows[0][1]:>10.1f}x")
    rows = bench_extremes(args.segments, args.repeat, rng)
    for name, t, v in rows:
        print(f"{f'segment_pair_extremes {args.segments}^2':<28}{name:<9}{t:>10.4f}{v:>20.12g}")
    if len(rows) == 2:
        print(f"{'':<28}{'speedup':<9}{rows[1][1] / rows[0][1]:>10.1f}x")


if __name__ == "__main__":
    main()
