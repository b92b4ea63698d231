"""Compare the numba kernel path against the pure-numpy fallback.

Run from the repo root:

    python3 benchmarks/bench_kernels.py --rows 4096 --cols 512 --repeats 50

The same comparison can be driven externally by setting NICAP_NUMBA=0, which
makes the whole package use the numpy path; here we time both implementations
side by side in one process.
"""

import argparse
import time

import numpy as np

from nicap import kernels


def _time(fn, repeats, *args):
    fn(*args)  # warm-up (numba compiles on first call)
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--cols", type=int, default=512)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not kernels.USE_NUMBA:
        print("numba path disabled (NICAP_NUMBA=0 or numba missing); "
              "nothing to compare")
        return

    rng = np.random.default_rng(args.seed)
    x = rng.uniform(-10, 10, (args.rows, args.cols)).astype(np.float32)
    w = rng.uniform(-1, 1, (args.rows, args.cols)).astype(np.float32)
    g = rng.uniform(-1, 1, (args.rows, args.cols)).astype(np.float32)
    v = np.zeros_like(w)

    cases = [
        ("sigmoid", kernels.sigmoid, kernels._numpy_sigmoid, (x,)),
        ("softmax_rows", kernels.softmax_rows, kernels._numpy_softmax_rows, (x,)),
        ("log_softmax_rows", kernels.log_softmax_rows,
         kernels._numpy_log_softmax_rows, (x,)),
        ("sgd_update", kernels.sgd_update, kernels._numpy_sgd_update,
         (w, g, v, np.float32(0.1), np.float32(0.9), np.float32(1e-4))),
    ]

    print(f"shape {args.rows}x{args.cols}, best of {args.repeats} runs")
    print(f"{'kernel':<18} {'numba (ms)':>12} {'numpy (ms)':>12} {'speedup':>9}")
    for name, jitted, plain, call_args in cases:
        t_nb = _time(jitted, args.repeats, *call_args)
        t_np = _time(plain, args.repeats, *call_args)
        print(f"{name:<18} {t_nb * 1e3:>12.3f} {t_np * 1e3:>12.3f} "
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
