"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each backend, the
speedup and the largest absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from spde_hmm import _kernels_py

try:
    from spde_hmm import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    K, N = 256, 32
    reps = np.arange(K, dtype=np.uint64)
    lam = (np.pi * np.arange(1, N + 1)) ** 2
    tau = 0.1
    decay = 1.0 / (1.0 + tau * lam)
    scale = np.sqrt(tau / lam) * decay
    y0 = np.zeros((K, N))
    yield ("gaussians K=256 steps=64 N=32",
           lambda m: m.gaussians(11, reps, 1, 0, 64, N))
    yield ("micro_chain K=256 M=512 Ma=256 N=32",
           lambda m: m.micro_chain(y0, decay, scale, 11, reps, 1, 0, 512, 256)[1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if compiled is None:
        print("compiled extension not available; only the numpy backend was timed")
    print(f"{'kernel':40s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, call in cases():
        tp, outp = best_of(lambda: call(_kernels_py), args.repeat)
        if compiled is None:
            print(f"{name:40s} {tp:10.4f}")
            continue
        tc, outc = best_of(lambda: call(compiled), args.repeat)
        diff = float(np.max(np.abs(outp - outc)))
        print(f"{name:40s} {tp:10.4f} {tc:11.4f} {tp / tc:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
