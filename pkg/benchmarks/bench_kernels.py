"""Compare the numba and numpy kernel backends on the per-iteration hot paths.

Usage: python3 benchmarks/bench_kernels.py [--n 500] [--reps 5]

Each kernel is timed with a fresh Gram cache so the DEC matrix
construction and factorisation are included. The first numba call is
excluded (JIT compilation) and reported separately.
"""

import argparse
import time

import numpy as np

from regmvst.model import PackedSubjects
from regmvst.estep import block_estep, grid_values
from regmvst.simgen import generate
from regmvst import _kernels_numba, _kernels_numpy


def _timed(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out)), float(np.min(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500, help="subjects")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    data, truth = generate(1, args.n, args.seed)
    orders = np.linspace(-20.0, 20.0, 20001)
    xs = np.geomspace(1e-3, 1e3, orders.size)

    def packs(backend):
        return lambda: PackedSubjects(data.subjects, data.p, data.q, backend=backend)

    cases = {
        "build_grams": lambda b: (lambda: packs(b)().grams(0.7, 0.6)),
        "estep": lambda b: (lambda: block_estep(packs(b)(), truth)),
        "dec_grid_11pts": lambda b: (lambda: grid_values(packs(b)(), truth, 1, 0.8)),
        "log_bessel_k_20k": lambda b: (lambda: (_kernels_numba if b == "numba" else _kernels_numpy)
                                       .log_k_array(orders, xs)),
    }

    t0 = time.perf_counter()
    for make in cases.values():
        make("numba")()
    print(f"numba warm-up (JIT compile) {time.perf_counter() - t0:.2f} s")

    ref = block_estep(packs("numpy")(), truth)
    alt = block_estep(packs("numba")(), truth)
    agree = max(float(np.max(np.abs(ref.a - alt.a) / np.abs(ref.a))),
                float(np.max(np.abs(ref.c - alt.c) / np.maximum(1.0, np.abs(ref.c)))))
    print(f"backend agreement on E-step moments: max relative diff {agree:.2e}")

    print(f"\nN={args.n}, median (min) of {args.reps} runs, seconds")
    print(f"{'kernel':<18}{'numba':>20}{'numpy':>20}{'speedup':>10}")
    for name, make in cases.items():
        nb = _timed(make("numba"), args.reps)
        npy = _timed(make("numpy"), args.reps)
        print(f"{name:<18}{nb[0]:>11.4f} ({nb[1]:.4f}){npy[0]:>11.4f} ({npy[1]:.4f})"
              f"{npy[0] / nb[0]:>9.1f}x")


if __name__ == "__main__":
    main()
