"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import timeit

import numpy as np

from csp_stream_lab import kernels
from csp_stream_lab.csp_family import builtin_family
from csp_stream_lab.hypermatching import folded_matrix, sample_hypermatching
from csp_stream_lab.zq_fourier import _forward_matrix


def cases(rng):
    q, n = 3, 9
    v = rng.normal(size=q**n) + 1j * rng.normal(size=q**n)
    yield "zq_transform q=3 n=9", lambda: kernels.zq_transform(v, q, n, _forward_matrix(q))

    f = rng.normal(size=4**5) + 0j
    g = rng.normal(size=4**5) + 0j
    yield "convolve_direct q=4 n=5", lambda: kernels.convolve_direct(f, g, 4, 5)

    M = sample_hypermatching(14, 2, 3, rng)
    A = folded_matrix(M, 2)
    yield "linear_images q=2 n=14", lambda: kernels.linear_images(A, 2, 14)

    F = builtin_family("keq", 2, 2)
    fidx = rng.integers(0, len(F), size=40)
    cvars = np.array([rng.choice(16, 2, replace=False) for _ in range(40)])
    yield "satisfied_counts q=2 n=16 m=40", lambda: kernels.satisfied_counts(2, 16, F.tables, fidx, cvars)

    yield "distinct_positions n=300 h=4 x1e5", lambda: kernels.distinct_positions(300, 4, 100_000, np.random.default_rng(1))

    pos = kernels.distinct_positions(40, 4, 100_000, np.random.default_rng(2))
    vals = np.ones(4, dtype=np.int64)
    yield "classify_support u=4 x1e5", lambda: kernels.classify_support(pos, vals, 2, 8, 2)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; only the numpy path can be timed")
    rows = []
    print(f"{'kernel':38s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)):
        res = {}
        for backend in ("numba", "numpy"):
            if backend == "numba" and not kernels.HAVE_NUMBA:
                continue
            kernels.set_backend(backend)
            fn()  # compile / warm caches
            res[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        kernels.set_backend("numba" if kernels.HAVE_NUMBA else "numpy")
        nb, npy = res.get("numba", float("nan")), res["numpy"]
        rows.append({"kernel": name, "numba_ms": nb, "numpy_ms": npy, "speedup": npy / nb})
        print(f"{name:38s} {nb:10.2f} {npy:10.2f} {npy / nb:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
