"""Compare the numba and pure-numpy kernel backends.

Times the individual convolution/pooling kernels and one full training
step (forward + loss + backward) of the width-0.25 waveform network.

Usage: python3 benchmarks/bench_backends.py [--repeats N] [--batch N]
"""

import argparse
import time

import numpy as np

from audiolrp import backend, kernels, nn


def timeit(fn, repeats, warmup=1):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(batch):
    rng = np.random.default_rng(0)
    x1 = rng.normal(size=(batch, 25, 2000)).astype(np.float32)
    w1 = rng.normal(size=(32, 25, 3)).astype(np.float32)
    gy1 = rng.normal(size=(batch, 32, 2000)).astype(np.float32)
    x2 = rng.normal(size=(batch, 8, 56, 56)).astype(np.float32)
    w2 = rng.normal(size=(16, 8, 5, 5)).astype(np.float32)
    gy2 = rng.normal(size=(batch, 16, 56, 56)).astype(np.float32)
    return [
        ("conv1d forward", lambda: kernels.conv1d_forward(x1, w1, 1, 1)),
        ("conv1d input grad", lambda: kernels.conv1d_input_grad(gy1, w1, 1, 1, 2000)),
        ("conv1d weight grad", lambda: kernels.conv1d_weight_grad(x1, gy1, 1, 1, 3)),
        ("conv2d forward", lambda: kernels.conv2d_forward(x2, w2, 1, 2)),
        ("conv2d input grad", lambda: kernels.conv2d_input_grad(gy2, w2, 1, 2, 56, 56)),
        ("conv2d weight grad", lambda: kernels.conv2d_weight_grad(x2, gy2, 1, 2, 5, 5)),
        ("maxpool1d", lambda: kernels.maxpool1d_forward(x1, 2, 2)),
        ("maxpool2d", lambda: kernels.maxpool2d_forward(x2, 2, 2)),
    ]


def train_step_case(batch):
    spec = nn.build_audionet(10, width_scale=0.25)
    model = nn.Model.initialize(spec, seed=0)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(batch, 8000, 1)).astype(np.float32)
    y = rng.integers(0, 10, size=batch)

    def step():
        logits, trace = nn.forward(model, x, record_trace=True)
        _, g = nn.softmax_cross_entropy(logits, y)
        nn.backward(model, trace, g)

    return step


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--batch", type=int, default=50)
    args = parser.parse_args()

    backends = ["numpy"]
    if backend.numba_available():
        backends.append("numba")
    else:
        print("numba not importable; timing the numpy backend only")

    results = {}
    for name in backends:
        backend.set_backend(name)
        rows = {}
        for label, fn in kernel_cases(args.batch):
            rows[label] = timeit(fn, args.repeats)
        rows["full train step"] = timeit(train_step_case(args.batch),
                                         args.repeats)
        results[name] = rows

    labels = list(results[backends[0]])
    width = max(len(l) for l in labels)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends)
    if len(backends) == 2:
        header += "  " + f"{'ratio':>7}"
    print(header)
    print("-" * len(header))
    for label in labels:
        line = f"{label:<{width}}  " + "  ".join(
            f"{results[b][label] * 1e3:>8.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"  {results['numba'][label] / results['numpy'][label]:>6.2f}x"
        print(line)
    if len(backends) == 2:
        print("\nratio < 1 means numba is faster; expect gains mainly on "
              "multi-core machines (the numba kernels parallelize across "
              "batch and channel indices).")


if __name__ == "__main__":
    main()
