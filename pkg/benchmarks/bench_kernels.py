"""Benchmark the numba kernels against the pure-numpy fallbacks.

Run with:  python3 benchmarks/bench_kernels.py

Times best_split (the per-node Gini search that dominates tree training)
and tree_apply (batch traversal, dominating forest prediction and the GA's
fitness evaluations) on a corpus-shaped workload.  The numba path is
skipped automatically when PERMEVADE_NO_NUMBA is set or numba is missing.
"""

import time

import numpy as np

from permevade import kernels
from permevade.detectors.trees import build_tree
from permevade.synth import SynthSpec, generate


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    corpus = generate(SynthSpec(rng_seed=0))
    X = corpus.X
    y = corpus.y
    rows = np.arange(X.shape[0])
    rng = np.random.default_rng(0)
    probe = (rng.random((20000, X.shape[1])) < 0.05).astype(np.uint8)

    tree = build_tree(X, y, rows, max_depth=15, min_samples_split=2,
                      min_samples_leaf=10)

    variants = [("numpy", kernels.best_split_numpy, kernels.tree_apply_numpy)]
    if kernels.best_split_numba is not None:
        # trigger JIT compilation outside the timed region
        kernels.best_split_numba(X, y, rows[:64], 1)
        kernels.tree_apply_numba(tree.feature, tree.left, tree.right,
                                 tree.value, probe[:64])
        variants.append(("numba", kernels.best_split_numba, kernels.tree_apply_numba))

    print(f"workload: X {X.shape}, probe {probe.shape}")
    results = {}
    for name, split_fn, apply_fn in variants:
        t_split = timeit(lambda: split_fn(X, y, rows, 10))
        t_apply = timeit(lambda: apply_fn(tree.feature, tree.left, tree.right,
                                          tree.value, probe))
        results[name] = (t_split, t_apply)
        print(f"{name:6s} best_split {t_split * 1e3:8.2f} ms   "
              f"tree_apply {t_apply * 1e3:8.2f} ms")

    if len(results) == 2:
        s = results["numpy"][0] / results["numba"][0]
        a = results["numpy"][1] / results["numba"][1]
        print(f"speedup numba/numpy: best_split {s:.1f}x, tree_apply {a:.1f}x")


if __name__ == "__main__":
    main()
