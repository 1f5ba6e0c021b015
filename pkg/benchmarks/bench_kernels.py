"""Time the numba kernels against the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths get identical inputs; the script checks they agree before timing.
"""
import argparse
import timeit

import numpy as np

from lcqkd._kernels import IMPLEMENTATIONS
from lcqkd.reconcile import draw_mask_batch


def cases(rng):
    w = rng.random(4096) ** 4
    cdf = np.cumsum(w) / w.sum()
    flips = rng.random((1 << 20, 10)) < 0.1
    diff = (rng.random((20_000, 64)) < 0.05).astype(np.uint8)
    masks = draw_mask_batch(rng, 20_000, 5, 64)
    return {
        "inverse_cdf (4096 cells, 1e6 draws)": ("inverse_cdf", (cdf, rng.random(1_000_000))),
        "majority_tally (2^20 blocks, k=5)": ("majority_tally", (flips, 5)),
        "hash_trials (2e4 keys, L=64, m=5)": ("hash_trials", (diff, masks)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<40}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for label, (name, inputs) in cases(rng).items():
        f_np = IMPLEMENTATIONS["numpy"][name]
        f_nb = IMPLEMENTATIONS["numba"][name]
        assert same(f_np(*inputs), f_nb(*inputs)), f"{name}: paths disagree"
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat))
        print(f"{label:<40}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
