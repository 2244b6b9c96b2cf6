"""Compiled vs pure-python kernel timings, plus one end-to-end loop timing.

Run from the repository root::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from handloop import kernels


def cases(rng):
    # shapes taken from the three networks at R=64, batch 64
    pred_in = rng.standard_normal((64, 1, 64, 64))
    upd_in = rng.standard_normal((64, 8, 30, 30))
    pool_in = rng.standard_normal((64, 8, 60, 60))
    cols = kernels.im2col(upd_in, 5, 5, 2)
    pooled, arg = kernels.maxpool_forward(pool_in, 4)
    grad = rng.standard_normal(pooled.shape)
    return {
        "im2col 1x64x64 k5 s1": lambda m: m.im2col(pred_in, 5, 5, 1),
        "im2col 8x30x30 k5 s2": lambda m: m.im2col(upd_in, 5, 5, 2),
        "col2im 8x30x30 k5 s2": lambda m: m.col2im(cols, 64, 8, 30, 30, 5, 5, 2),
        "maxpool fwd 8x60x60 w4": lambda m: m.maxpool_forward(pool_in, 4),
        "maxpool bwd 8x60x60 w4": lambda m: m.maxpool_backward(grad, arg, 4),
    }


def time_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    names = sorted(kernels.BACKENDS)
    print(f"{'kernel':26s}" + "".join(f"{n:>12s}" for n in names) + "     speedup")
    for label, fn in cases(rng).items():
        times = {n: time_call(lambda: fn(kernels.BACKENDS[n]), repeat) for n in names}
        row = f"{label:26s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if "compiled" in times:
            row += f"  {times['python'] / times['compiled']:8.2f}x"
        print(row)


def bench_loop(repeat, resolution=64):
    from handloop.cli import bench_loop as loop_timing
    from handloop.feedback import LoopConfig
    from handloop.networks import build_predictor, build_synthesizer, build_updater
    config = LoopConfig(build_predictor(resolution), build_synthesizer(resolution),
                        build_updater(resolution), iterations=2)
    for name in sorted(kernels.BACKENDS):
        previous = kernels.use_backend(name)
        try:
            ms = loop_timing(config, resolution, frames=20, repeats=repeat)
        finally:
            kernels.use_backend(previous)
        print(f"loop R={resolution} predictor + 2 updates [{name}]: {ms:.2f} ms/frame")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-loop", action="store_true")
    args = parser.parse_args()
    bench_kernels(args.repeat)
    if not args.skip_loop:
        bench_loop(args.repeat)


if __name__ == "__main__":
    main()
