"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--points N] [--repeat R]
"""
import argparse
import time

import numpy as np

from urbanseg import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--candidates", type=int, default=100)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    pts = rng.random((args.points, 3)) * 100
    emb = rng.normal(size=(args.points, args.dim))
    cand = rng.normal(size=(args.candidates, args.dim))
    small = emb[: min(args.points, 20_000)]
    cases = {
        "fps": lambda b: kernels.fps(pts, args.candidates, 0, backend=b),
        "relation_matrix": lambda b: kernels.relation_matrix(small, cand, backend=b),
        "nearest_candidate": lambda b: kernels.nearest_candidate(emb, cand, backend=b),
    }
    backends = list(kernels.BACKENDS)
    print(f"points={args.points} candidates={args.candidates} dim={args.dim} default backend={kernels.BACKEND}")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  identical")
    for name, fn in cases.items():
        results = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        row = f"{name:<20}" + "".join(f"{results[b][0]:>11.4f}s" for b in backends)
        if "cython" in results:
            speed = results["python"][0] / results["cython"][0]
            a, c = results["python"][1], results["cython"][1]
            same = all(np.array_equal(x, y) for x, y in zip(a, c)) if isinstance(a, tuple) else np.array_equal(a, c)
            row += f"{speed:>9.1f}x  {same}"
        print(row)


if __name__ == "__main__":
    main()
