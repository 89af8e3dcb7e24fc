"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so no environment flag is needed. The
first numba call of each kernel (JIT compilation) is excluded.
"""
import argparse
import timeit

import numpy as np

from gestureprint.kernels import _nb, _np


def cases(rng):
    a = rng.standard_normal((200, 3))
    b = rng.standard_normal((180, 3))
    cloud = 0.3 * rng.standard_normal((400, 3))
    pts = np.ascontiguousarray(rng.standard_normal((256, 3)) * 0.3)
    centers = np.arange(0, 256, 4, dtype=np.int64)
    target = np.zeros((64, 32))
    idx = rng.integers(0, 64, 2048).astype(np.int64)
    src = rng.standard_normal((2048, 32))
    return {
        "directed_min_dist 200x180": lambda k: k.directed_min_dist(a, b),
        "farthest_point_sample 256->64": lambda k: k.farthest_point_sample(pts, 64, 0),
        "ball_query 64 centers, m=32": lambda k: k.ball_query(pts, centers, 0.4, 32),
        "dbscan 400 points": lambda k: k.dbscan(cloud, 0.1, 4),
        "scatter_add_rows 2048x32": lambda k: k.scatter_add_rows(target, idx, src),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        fn(_nb)  # compile
        t = {}
        for label, mod in (("numpy", _np), ("numba", _nb)):
            best = min(timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number))
            t[label] = best / args.number * 1e6
        print(f"{name:34s} {t['numpy']:10.1f} {t['numba']:10.1f} {t['numpy'] / t['numba']:7.1f}x")


if __name__ == "__main__":
    main()
