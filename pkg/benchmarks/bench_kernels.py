#!/usr/bin/env python3
"""Benchmark the compiled conv1d+tanh kernels against the numpy fallback.

The conv forward/backward pair is the training hot path (one call per
mention per step). Run after building the extension:

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from hiertype.numcore import kernels


def timeit(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_case(s, d_in, d_out, w, repeats):
    rng = np.random.default_rng(0)
    M = rng.normal(size=(s, d_in))
    W = rng.normal(size=(w, d_out, d_in))
    b = rng.normal(size=d_out)
    C = kernels.conv1d_tanh_forward_numpy(M, W, b)
    dC = rng.normal(size=C.shape)

    rows = []
    fwd_np = timeit(lambda: kernels.conv1d_tanh_forward_numpy(M, W, b), repeats)
    bwd_np = timeit(lambda: kernels.conv1d_tanh_backward_numpy(M, W, C, dC),
                    repeats)
    rows.append(("numpy", fwd_np, bwd_np))
    if kernels.HAVE_COMPILED:
        fwd_c = timeit(lambda: kernels._ckernels.conv1d_tanh_forward(M, W, b),
                       repeats)
        bwd_c = timeit(
            lambda: kernels._ckernels.conv1d_tanh_backward(M, W, C, dC),
            repeats)
        rows.append(("cython", fwd_c, bwd_c))
        got = kernels._ckernels.conv1d_tanh_forward(M, W, b)
        assert np.allclose(got, C, atol=1e-12), "implementations disagree"
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not kernels.HAVE_COMPILED:
        print("compiled kernels unavailable; benchmarking numpy fallback only")

    cases = [
        (10, 30, 24, 5),     # acceptance-experiment scale
        (20, 325, 300, 5),   # full-scale token width (300 word + 25 position)
        (50, 325, 300, 5),   # longest allowed sentence at full scale
    ]
    header = f"{'case':>22} {'impl':>8} {'fwd us':>10} {'bwd us':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for s, d_in, d_out, w in cases:
        label = f"s={s} d_in={d_in} d={d_out}"
        rows = bench_case(s, d_in, d_out, w, args.repeats)
        base = rows[0][1] + rows[0][2]
        for impl, fwd, bwd in rows:
            speed = base / (fwd + bwd)
            print(f"{label:>22} {impl:>8} {fwd * 1e6:>10.1f} {bwd * 1e6:>10.1f} "
                  f"{speed:>7.2f}x")


if __name__ == "__main__":
    main()
