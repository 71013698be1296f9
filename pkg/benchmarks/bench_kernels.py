"""Compare the numba and numpy kernel backends on baseline-CNN sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat 20] [--batch 32]

Times im2col/col2im (conv2d forward/backward) and maxpool forward/backward for
each conv block of the baseline CNN on a 1x32x32 input, plus one full
conv2d+maxpool forward/backward through the autodiff ops. Both backends are
checked for equal outputs before timing.
"""

import argparse
import time

import numpy as np

from faircl.autodiff import Tensor, backward, conv2d, maxpool2d, total
from faircl.autodiff import kernels

# (channels, spatial size) at the input of each baseline conv layer
SHAPES = [(1, 32), (32, 32), (32, 16), (64, 16), (64, 8), (128, 8), (128, 4), (256, 4)]


def best_of(fn, repeat):
    fn()  # warm-up (includes numba compilation on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(batch, rng):
    for c, s in SHAPES:
        x = rng.normal(size=(batch, c, s, s)).astype(np.float32)
        cols = kernels.im2col(x, 3, 3, 1, 1)
        yield f"im2col   {c:>3}x{s:<2}", lambda x=x: kernels.im2col(x, 3, 3, 1, 1)
        yield f"col2im   {c:>3}x{s:<2}", lambda cols=cols, shape=x.shape: kernels.col2im(cols, shape, 3, 3, 1, 1)
    for c, s in SHAPES[1::2]:
        x = rng.normal(size=(batch, c, s, s)).astype(np.float32)
        out, arg = kernels.maxpool_forward(x, 2, 2)
        yield f"pool fwd {c:>3}x{s:<2}", lambda x=x: kernels.maxpool_forward(x, 2, 2)
        yield f"pool bwd {c:>3}x{s:<2}", lambda g=np.ones_like(out), a=arg, shape=x.shape: \
            kernels.maxpool_backward(g, a, shape, 2, 2)


def layer_step(batch, rng):
    x = Tensor(rng.normal(size=(batch, 32, 32, 32)).astype(np.float32), requires_grad=True)
    w = Tensor(0.1 * rng.normal(size=(32, 32, 3, 3)).astype(np.float32), requires_grad=True)

    def step():
        x.grad = w.grad = None
        backward(total(maxpool2d(conv2d(x, w, padding=1), 2)))
        return w.grad

    return step


def check_equal(batch, rng):
    x = rng.normal(size=(batch, 8, 12, 12))
    results = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        cols = kernels.im2col(x, 3, 3, 2, 1)
        out, arg = kernels.maxpool_forward(x, 2, 2)
        results[name] = (cols, kernels.col2im(cols, x.shape, 3, 3, 2, 1), out,
                         kernels.maxpool_backward(np.ones_like(out), arg, x.shape, 2, 2))
    ref = results["numpy"]
    for name, res in results.items():
        for a, b in zip(ref, res):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12, err_msg=name)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    prev = kernels.active_backend()
    try:
        check_equal(4, np.random.default_rng(0))
        timings = {}
        for name in backends:
            kernels.use_backend(name)
            rng = np.random.default_rng(0)
            for label, fn in kernel_cases(args.batch, rng):
                timings.setdefault(label, {})[name] = best_of(fn, args.repeat)
            timings.setdefault("conv+pool fwd/bwd 32x32", {})[name] = best_of(layer_step(args.batch, rng), args.repeat)
    finally:
        kernels.use_backend(prev)
    head = f"{'case':<26}" + "".join(f"{b + ' ms':>12}" for b in backends)
    if "numba" in backends:
        head += f"{'speedup':>10}"
    print(f"batch={args.batch}, best of {args.repeat}")
    print(head)
    for label, t in timings.items():
        line = f"{label:<26}" + "".join(f"{1e3 * t[b]:>12.3f}" for b in backends)
        if "numba" in backends:
            line += f"{t['numpy'] / t['numba']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
