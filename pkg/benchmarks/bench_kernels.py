"""Time the numba kernels against their pure-numpy fallbacks.

Run ``python benchmarks/bench_kernels.py``. Each kernel is called once per
backend to warm up (JIT compilation), then timed as the best of a few runs.
Outputs are compared so a speedup never hides a wrong answer.
"""
import argparse
import os
import time

import numpy as np

from dpsqkd import _kernels
from dpsqkd.postprocess import toeplitz_diagonals


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(scale):
    gen = np.random.default_rng(1)
    slots = np.cumsum(gen.geometric(1 / 15, size=int(2e6 * scale))).astype(np.int64)
    keys = [int(k) for k in gen.integers(0, 2 ** 63, size=6)]
    probs = (1e-4, 0.01, 1e-5, 1e-5)
    n = int(2 ** 16 * scale)
    diag = toeplitz_diagonals(n, n // 2, 3)
    x = gen.integers(0, 2, n, dtype=np.uint8)
    return {
        "dead_time (2e6 candidates)": lambda: _kernels.dead_time_filter(slots, 20)[0],
        "dense_link (5e7 slots)": lambda: _kernels.dense_link(int(5e7 * scale), keys, probs, 20)[0],
        f"toeplitz ({n} -> {n // 2} bits)": lambda: _kernels.toeplitz_mult(diag, x, n // 2),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<32} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8}")
    for name, fn in cases(args.scale).items():
        results = {}
        for b in ("numba", "numpy"):
            os.environ[_kernels.BACKEND_ENV] = b
            fn()
            results[b] = best_of(fn, args.repeat)
        (t_nb, o_nb), (t_np, o_np) = results["numba"], results["numpy"]
        if not np.array_equal(o_nb, o_np):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<32} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>7.1f}x")
    os.environ.pop(_kernels.BACKEND_ENV, None)


if __name__ == "__main__":
    main()
