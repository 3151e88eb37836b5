"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also checks that both backends return bit-identical results.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from greencool import kernels


def cases(rng):
    grid = rng.uniform(0.0, 0.9, (300, 300))
    mask = rng.uniform(size=grid.shape) < 0.9
    x, y = rng.uniform(0, 1, 1_000_000), rng.normal(30, 3, 1_000_000)
    w = rng.uniform(0, 5000, 1_000_000)
    gx, gw = rng.lognormal(0, 1, 2000), rng.uniform(0.1, 10, 2000)
    return {
        "seqsum (1e6)": ("seqsum", (x,)),
        "ols_moments (1e6)": ("ols_moments", (x, y)),
        "weighted_sums (1e6)": ("weighted_sums", (x, w)),
        "box_mean 300x300 w=3": ("box_mean", (grid, mask, 3)),
        "box_mean 300x300 w=5": ("box_mean", (grid, mask, 5)),
        "pairwise gini n=2000": ("pairwise_weighted_absdiff", (gx, gw)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")

    impls = {"numpy": kernels.numpy_impl, "numba": kernels.numba_impl}
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  identical")
    for label, (name, inputs) in cases(np.random.default_rng(args.seed)).items():
        best, results = {}, {}
        for backend, mod in impls.items():
            fn = getattr(mod, name)
            results[backend] = fn(*inputs)  # also triggers compilation
            best[backend] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        same = np.array_equal(np.asarray(results["numpy"]), np.asarray(results["numba"]), equal_nan=True)
        print(f"{label:<24}{best['numpy']:>12.2f}{best['numba']:>12.2f}{best['numpy'] / best['numba']:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
