"""Compare the jitted and pure-numpy paths of the hot kernels.

Times the pairwise kernel-matrix assembly and a full pivoted
incomplete-Cholesky factorization under both implementations.  Run as

    python benchmarks/bench_accel.py [--n 2000] [--rank 200] [--dim 5]
"""

import argparse
import os
import time

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np

from pargp import _accel
from pargp.core import Hyperparams, Points
from pargp.icf import FactorState, SqexpColumns


def time_call(fn, reps):
    fn()  # warm-up (includes jit compilation on the numba path)
    best = float("inf")
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_gram(impl, coords, inv_ls, reps):
    return time_call(lambda: impl["sqexp_gram"](coords, coords, inv_ls, 1.0), reps)


def bench_icf(impl, points, h, rank, reps):
    # the factorization reads its kernels through module globals, so a
    # swap exercises exactly one implementation end to end
    import pargp.icf as icf_mod

    saved = (icf_mod.sqexp_row, icf_mod.residual_row)

    def run():
        source = SqexpColumns(points, h)
        state = FactorState(source, rank)
        for _ in range(rank):
            cand = state.best_candidate()
            if cand is None:
                break
            state.apply_pivot(state.pivot_payload(cand[1]))

    icf_mod.sqexp_row = impl["sqexp_row"]
    icf_mod.residual_row = impl["residual_row"]
    try:
        return time_call(run, reps)
    finally:
        icf_mod.sqexp_row, icf_mod.residual_row = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--rank", type=int, default=200)
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 10, (args.n, args.dim))
    points = Points(coords, np.arange(args.n))
    h = Hyperparams(1.0, 0.1, np.full(args.dim, 1.5))
    inv_ls = 1.0 / h.length_scales

    impls = {"numpy": _accel.NUMPY_IMPL}
    if _accel.NUMBA_IMPL is not None:
        impls["numba"] = _accel.NUMBA_IMPL
    else:
        print("numba unavailable or disabled; timing the numpy path only")

    results = {}
    for name, impl in impls.items():
        gram = bench_gram(impl, coords, inv_ls, args.reps)
        factor = bench_icf(impl, points, h, args.rank, args.reps)
        results[name] = (gram, factor)
        print(
            f"{name:6s}  kernel matrix {args.n}x{args.n}: {gram * 1e3:8.1f} ms   "
            f"pivoted factorization rank {args.rank}: {factor * 1e3:8.1f} ms"
        )
    if len(results) == 2:
        g = results["numpy"][0] / results["numba"][0]
        f = results["numpy"][1] / results["numba"][1]
        print(f"speedup numba vs numpy: kernel matrix {g:.1f}x, factorization {f:.1f}x")


if __name__ == "__main__":
    main()
