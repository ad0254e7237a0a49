"""Compare the numba kernels against the pure-numpy kernels.

Times conv2d forward/backward and maxpool on training-shaped inputs plus
one full training step. Run from the repo root:

    python3 benchmarks/bench_backends.py [--batch 20] [--size 64] [--reps 20]

The faster backend depends on the machine: the numpy path leans on BLAS
through an im2col reshape, the numba path is direct parallel loops.
"""

import argparse
import time

import numpy as np


def timeit(fn, reps):
    fn()  # warm up (JIT compile / page in)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps * 1000.0


def bench_kernels(mod, batch, size, reps):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, size, size, 16)).astype(np.float32)
    w = rng.standard_normal((3, 3, 16, 32)).astype(np.float32)
    b = np.zeros(32, np.float32)
    y = mod.conv2d_forward(x, w, b, 1)
    dy = rng.standard_normal(y.shape).astype(np.float32)
    pooled, idx = mod.maxpool2x2_forward(y)
    dpool = rng.standard_normal(pooled.shape).astype(np.float32)
    return {
        "conv_forward": timeit(lambda: mod.conv2d_forward(x, w, b, 1), reps),
        "conv_backward": timeit(lambda: mod.conv2d_backward(x, w, dy, 1), reps),
        "maxpool_forward": timeit(lambda: mod.maxpool2x2_forward(y), reps),
        "maxpool_backward": timeit(
            lambda: mod.maxpool2x2_backward(dpool, idx, y.shape), reps),
    }


def bench_train_step(batch, size, reps):
    """One optimizer step of the full quality model on synthetic data."""
    from usguide import model as qm
    from usguide import nn

    cfg = qm.ModelConfig(image_size=(size, size, 1),
                         conv_channels=(16, 32) if size == 32 else (16, 32, 64, 64))
    model = qm.build(cfg, seed=0)
    rng = np.random.default_rng(0)
    pixels = rng.random((batch, size, size, 1), dtype=np.float32)
    poses = rng.standard_normal((batch, 4)).astype(np.float32)
    wrenches = rng.standard_normal((batch, 6)).astype(np.float32)
    labels = rng.integers(0, 2, batch)

    def step():
        logits, _ = model.forward_batch(pixels, poses, wrenches, keep_cache=True)
        _, d = nn.cross_entropy_batch(logits, labels)
        model.backward_batch(d)
        nn.sgd_step(model.store, 0.001)

    return timeit(step, reps)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=20)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--reps", type=int, default=20)
    args = ap.parse_args()

    from usguide.nn import kernels_numpy

    try:
        from usguide.nn import kernels_numba
    except ImportError:
        kernels_numba = None

    results = {"numpy": bench_kernels(kernels_numpy, args.batch, args.size,
                                      args.reps)}
    if kernels_numba is not None:
        results["numba"] = bench_kernels(kernels_numba, args.batch, args.size,
                                         args.reps)

    ops = list(results["numpy"])
    print(f"{'op':18s} " + " ".join(f"{k:>12s}" for k in results))
    for op in ops:
        row = " ".join(f"{results[k][op]:10.3f}ms" for k in results)
        print(f"{op:18s} {row}")

    import usguide.backend

    ms = bench_train_step(args.batch, args.size, max(3, args.reps // 4))
    print(f"\ntrain_step ({usguide.backend.BACKEND} backend, batch={args.batch}, "
          f"{args.size}x{args.size}): {ms:.1f} ms")
    print("set USG_BACKEND=numba or numpy and rerun to compare the full step")


if __name__ == "__main__":
    main()
