"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are checked to agree before anything is timed.
"""
import argparse
import timeit

import numpy as np

from localflow import _pykernels
from localflow.costs import QuadraticCost
from localflow.graph import random_regular_graph
from localflow.sensitivity import FlowProblem, sensitivity_at
from localflow.spectral import killed_walk

try:
    from localflow import _ckernels
except ImportError:
    _ckernels = None


def _walk_args(n=200, n_walks=20_000):
    g = random_regular_graph(n, 3, seed=0)
    s = sensitivity_at(FlowProblem(g, [QuadraticCost()] * g.n_edges, np.zeros(n)))
    P = killed_walk(s, n - 1).P
    rows, cols = np.nonzero(P)
    indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
    cdf = np.empty(len(rows))
    for v in range(n):
        lo, hi = indptr[v], indptr[v + 1]
        cdf[lo:hi] = np.cumsum(P[v, cols[lo:hi]])
        cdf[hi - 1] = 1.0
    return (indptr, cols.astype(np.int64), cdf, 0, n - 1, 1, n_walks, 12345)


def cases():
    rng = np.random.default_rng(0)
    g = random_regular_graph(5000, 3, seed=1)
    indptr, indices, _ = g._csr
    m = 100_000
    a, s, y = rng.uniform(0.5, 2, m), rng.uniform(0, 5, m), rng.normal(scale=10, size=m)
    return {
        "bfs_distances (n=5000)": ("bfs_distances", (indptr, indices, np.array([0]))),
        "inverse_gradient (m=1e5)": ("inverse_gradient", (a, s, y)),
        "simulate_killed_walks (n=200, 2e4 walks)": ("simulate_killed_walks", _walk_args()),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':44s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for label, (name, fargs) in cases().items():
        py = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: py(*fargs), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{label:44s} {t_py:11.4f} {'-':>11s} {'-':>8s}")
            continue
        cy = getattr(_ckernels, name)
        ref, got = py(*fargs), cy(*fargs)
        if isinstance(ref, tuple):
            assert ref == tuple(got), f"{name}: backends disagree"
        else:
            np.testing.assert_allclose(np.asarray(got), ref, rtol=1e-12, atol=1e-12)
        t_cy = min(timeit.repeat(lambda: cy(*fargs), number=1, repeat=args.repeat))
        print(f"{label:44s} {t_py:11.4f} {t_cy:11.4f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
