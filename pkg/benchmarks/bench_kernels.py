"""Benchmark the jit and numpy conv/pool kernels at the model's layer shapes.

Runs every hot kernel through both backend tables and prints a timing table
plus the worst numeric disagreement. Use --quick for a fast smoke pass.

    python benchmarks/bench_kernels.py [--batch 64] [--reps 20] [--quick]
"""

import argparse
import time

import numpy as np

from ecgvae import kernels

# (label, in_channels, out_channels, length, stride) per conv layer, plus the
# pooling stages; these mirror the default encoder/decoder at cycle length 400
CONV_SHAPES = [
    ("enc conv1  1->16 L400", 1, 16, 400, 1),
    ("enc conv2 16->32 L200", 16, 32, 200, 1),
    ("enc conv3 32->64 L100", 32, 64, 100, 1),
    ("enc conv4 64->128 L50", 64, 128, 50, 1),
    ("dec conv1  1->64 L25", 1, 64, 25, 1),
    ("dec conv2 64->32 L50", 64, 32, 50, 1),
    ("dec conv3 32->16 L100", 32, 16, 100, 1),
    ("dec conv4 16->1 L200", 16, 1, 200, 1),
]
POOL_SHAPES = [
    ("enc pool1 16ch L400", 16, 400),
    ("enc pool2 32ch L200", 32, 200),
    ("enc pool3 64ch L100", 64, 100),
    ("enc pool4 128ch L50", 128, 50),
]
KERNEL_WIDTH = 5
POOL_WIDTH = 2


def best_ms(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench_conv(impls, batch: int, reps: int):
    rng = np.random.default_rng(0)
    rows = []
    worst_diff = 0.0
    for label, ci, co, length, stride in CONV_SHAPES:
        x = rng.standard_normal((batch, ci, length)).astype(np.float32)
        w = rng.standard_normal((co, ci, KERNEL_WIDTH)).astype(np.float32)
        xp = kernels._pad_same(x, KERNEL_WIDTH)
        lout = kernels.conv_out_len(length, stride)
        y = {}
        times = {}
        for name, table in impls.items():
            fwd = table["conv_fwd"]
            bwd = table["conv_bwd"]
            y[name] = fwd(xp, w, stride, lout)
            dy = np.ascontiguousarray(y[name])
            fwd(xp, w, stride, lout)  # warm path before timing
            bwd(xp, w, stride, dy)
            times[name] = (best_ms(lambda: fwd(xp, w, stride, lout), reps),
                           best_ms(lambda: bwd(xp, w, stride, dy), reps))
        if len(y) == 2:
            a, b = y.values()
            worst_diff = max(worst_diff, float(np.abs(a - b).max()))
        rows.append((label, times))
    return rows, worst_diff


def bench_pool(impls, batch: int, reps: int):
    rng = np.random.default_rng(1)
    rows = []
    worst_diff = 0.0
    for label, ch, length in POOL_SHAPES:
        x = rng.standard_normal((batch, ch, length)).astype(np.float32)
        lout = length // POOL_WIDTH
        y = {}
        times = {}
        for name, table in impls.items():
            fwd = table["pool_fwd"]
            bwd = table["pool_bwd"]
            out, idx = fwd(x, POOL_WIDTH, lout)
            y[name] = out
            dy = np.ascontiguousarray(out)
            times[name] = (best_ms(lambda: fwd(x, POOL_WIDTH, lout), reps),
                           best_ms(lambda: bwd(dy, idx, length), reps))
        if len(y) == 2:
            a, b = y.values()
            worst_diff = max(worst_diff, float(np.abs(a - b).max()))
        rows.append((label, times))
    return rows, worst_diff


def print_table(title: str, rows, names) -> None:
    print(f"\n{title}")
    head = f"{'layer':<24}"
    for name in names:
        head += f"{name + ' fwd':>12}{name + ' bwd':>12}"
    if len(names) == 2:
        head += f"{'fwd x':>8}{'bwd x':>8}"
    print(head)
    print("-" * len(head))
    for label, times in rows:
        line = f"{label:<24}"
        for name in names:
            f, b = times[name]
            line += f"{f:>10.3f}ms{b:>10.3f}ms"
        if len(names) == 2:
            (f0, b0), (f1, b1) = (times[n] for n in names)
            line += f"{f1 / f0:>7.1f}x{b1 / b0:>7.1f}x"
        print(line)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--quick", action="store_true", help="3 reps, small batch")
    args = ap.parse_args()
    batch = 8 if args.quick else args.batch
    reps = 3 if args.quick else args.reps

    names = list(kernels.available_backends())
    if kernels.backend_name() in names:
        # put the active backend first so the speedup column reads active/other
        names.remove(kernels.backend_name())
        names.insert(0, kernels.backend_name())
    impls = {name: kernels.get_impl(name) for name in names}

    print(f"active backend: {kernels.backend_name()}  "
          f"(batch {batch}, best of {reps} reps)")
    conv_rows, conv_diff = bench_conv(impls, batch, reps)
    print_table("conv1d (same padding, K=5)", conv_rows, names)
    pool_rows, pool_diff = bench_pool(impls, batch, reps)
    print_table(f"maxpool1d (width {POOL_WIDTH})", pool_rows, names)
    if len(names) == 2:
        print(f"\nmax |numba - numpy| disagreement: conv {conv_diff:.2e}, "
              f"pool {pool_diff:.2e}")


if __name__ == "__main__":
    main()
