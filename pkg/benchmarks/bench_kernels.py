"""Compare the compiled and pure-Python Louvain kernels on random sparse graphs.

    python3 benchmarks/bench_kernels.py [--nodes 2000 5000] [--degree 8] [--repeat 3]

Both kernels share one source; the script also checks that they return the
same labels.
"""
import argparse
import time

import numpy as np

from hiergraph import kernels
from hiergraph.louvain import build_csr, node_degree


def random_graph(n, avg_degree, rng):
    m = n * avg_degree // 2
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    return build_csr(n, zip(src[keep], dst[keep], rng.uniform(0.5, 2.0, keep.sum())))


def timed(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, nargs="+", default=[1000, 5000, 20000])
    ap.add_argument("--degree", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"numba available: {kernels.HAS_NUMBA}")
    if kernels.HAS_NUMBA:  # compile outside the timed region
        g = random_graph(10, 2, rng)
        d = node_degree(g)
        kernels.local_moving(g.indptr, g.indices, g.weights, d, np.arange(10), np.arange(10), 1.0, d.sum(), 10)
    print(f"{'nodes':>8} {'python s':>10} {'compiled s':>11} {'speedup':>8}  same")
    for n in args.nodes:
        g = random_graph(n, args.degree, rng)
        d = node_degree(g)
        call = (g.indptr, g.indices, g.weights, d, np.arange(n, dtype=np.int64),
                rng.permutation(n).astype(np.int64), 1.0, float(d.sum()), 1000)
        t_py, (lab_py, _) = timed(kernels.local_moving_py, call, 1)
        t_nb, (lab_nb, _) = timed(kernels.local_moving, call, args.repeat)
        same = bool(np.array_equal(np.asarray(lab_py), np.asarray(lab_nb)))
        print(f"{n:>8} {t_py:>10.3f} {t_nb:>11.4f} {t_py / t_nb:>8.1f}  {same}")


if __name__ == "__main__":
    main()
