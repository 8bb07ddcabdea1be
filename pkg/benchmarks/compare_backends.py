"""Time the LSTM kernel backends against each other.

Runs the forward and forward+backward paths over a grid of sequence
lengths at the training hidden size, on both the compiled extension and
the numpy fallback, and prints per-call times with the speedup.

Usage: python benchmarks/compare_backends.py [--reps 400] [--hidden 16]
"""

import argparse
import time

import numpy as np

from sketchsql.kernels import available_backends, get_backend


def time_call(fn, reps):
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - start) / reps)
    return best


def bench(backend, steps, hidden, reps, with_backward):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((steps, hidden))
    h0 = np.zeros(hidden)
    c0 = np.zeros(hidden)
    wx = rng.standard_normal((hidden, 4 * hidden)) * 0.3
    wh = rng.standard_normal((hidden, 4 * hidden)) * 0.3
    b = np.zeros(4 * hidden)
    d_hseq = rng.standard_normal((steps, hidden))

    if with_backward:
        def call():
            _, cache = backend.lstm_forward(x, h0, c0, wx, wh, b)
            backend.lstm_backward(cache, d_hseq)
    else:
        def call():
            backend.lstm_forward(x, h0, c0, wx, wh, b)

    return time_call(call, reps)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=400)
    parser.add_argument("--hidden", type=int, default=16,
                        help="per-direction hidden size (training uses d/2)")
    args = parser.parse_args()

    names = available_backends()
    print(f"backends: {', '.join(names)}")
    if len(names) < 2:
        print("compiled extension not importable; timing numpy alone")

    header = f"{'path':>18} {'steps':>6}" + "".join(f"{n:>12}" for n in names)
    print(header + ("  speedup" if len(names) == 2 else ""))
    for with_backward, label in ((False, "forward"), (True, "forward+backward")):
        for steps in (4, 8, 16, 32):
            row = f"{label:>18} {steps:>6}"
            times = []
            for name in names:
                t = bench(get_backend(name), steps, args.hidden, args.reps,
                          with_backward)
                times.append(t)
                row += f"{t * 1e6:>10.1f}us"
            if len(times) == 2:
                row += f"  {times[0] / times[1]:>6.2f}x"
            print(row)


if __name__ == "__main__":
    main()
