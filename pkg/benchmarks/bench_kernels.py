"""Time the LSTM layer kernels under the numpy and numba backends.

Each case runs forward + BPTT for one layer on a random time-major batch.
Numba compilation happens in a warm-up call that is not timed. The last
column is the numpy time divided by the numba time (above 1 means numba is
faster); ``auto`` is the default per-batch dispatch.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --batch 64 --timesteps 5 --input 100 --hidden 64 --repeat 50
"""
import argparse
import time

import numpy as np

from shl_lstm.nn.kernels import get_kernels, numba_available


def time_case(kernels, X, W, U, b, dH, sigmoid_cell, repeat):
    fwd, bwd = kernels["lstm_forward"], kernels["lstm_backward"]
    out = fwd(X, W, U, b, sigmoid_cell)
    bwd(X, W, U, *out, dH, sigmoid_cell)  # warm-up (and JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fwd(X, W, U, b, sigmoid_cell)
        grads = bwd(X, W, U, *out, dH, sigmoid_cell)
        best = min(best, time.perf_counter() - t0)
    return best, out, grads


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, nargs="+", default=[1, 4, 8, 64, 512])
    ap.add_argument("--timesteps", type=int, default=5)
    ap.add_argument("--input", type=int, default=100)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba", "auto"] if numba_available() else [])
    if len(backends) == 1:
        print("numba is not installed; timing the numpy backend only")
    rng = np.random.default_rng(args.seed)
    H, D, T = args.hidden, args.input, args.timesteps
    W = rng.normal(scale=0.1, size=(D, 4 * H))
    U = rng.normal(scale=0.1, size=(H, 4 * H))
    b = np.zeros(4 * H)

    print(f"T={T} D={D} H={H}, best of {args.repeat} (forward + backward, one layer)")
    print(f"{'batch':>6} {'cell':>8} " + " ".join(f"{name + ' ms':>10}" for name in backends) + "  numba/numpy")
    for B in args.batch:
        X = rng.normal(size=(T, B, D))
        dH = rng.normal(size=(T, B, H))
        for sigmoid_cell in (True, False):
            times, results = [], []
            for name in backends:
                dt, out, grads = time_case(get_kernels(name), X, W, U, b, dH, sigmoid_cell, args.repeat)
                times.append(dt)
                results.append(grads)
            for other in results[1:]:
                diff = max(float(np.max(np.abs(x - y))) for x, y in zip(results[0], other))
                assert diff < 1e-10, f"backends disagree by {diff}"
            speed = f"{times[0] / times[1]:7.2f}x" if len(times) > 1 else ""
            cell = "sigmoid" if sigmoid_cell else "tanh"
            print(f"{B:>6} {cell:>8} " + " ".join(f"{t * 1e3:>10.3f}" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
