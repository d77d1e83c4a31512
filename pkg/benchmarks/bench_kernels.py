"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--size 192] [--repeat 5]

Every kernel is run once per backend before timing (numba compiles on first
call) and the outputs are compared; a mismatch aborts the benchmark. The
"detector" rows time whole Harris / DoG passes with the backend switched.
"""

import argparse
import sys
import time

import numpy as np

from featbounds import _kernels
from featbounds.detectors import detect_dog, detect_harris
from featbounds.imaging import gaussian_kernel, textured_scene


def best_of(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if hasattr(a, "points"):
        return a.points == b.points
    return np.array_equal(a, b)


def cases(size, rng):
    img = textured_scene(rng, size, size)
    arr = img.as_float()
    k = gaussian_kernel(2.0)
    resp = rng.standard_normal((size, size))
    resp[::7, ::5] = 3.0  # plateaus exercise the raster tie rule
    dog = rng.standard_normal((8, size // 2, size // 2)) * 0.05
    ref = rng.uniform(0, size, (400, 2))
    tgt = ref + rng.normal(0, 2, ref.shape)
    ok = np.ones(len(ref), np.bool_)
    return [
        ("convolve_rows", lambda K: K["convolve_rows"](arr, k)),
        ("nms_mask r=3", lambda K: K["nms_mask"](resp, 3, 0.5)),
        ("scale_space_extrema", lambda K: K["scale_space_extrema"](dog, 0.03)),
        ("greedy_match 400x400", lambda K: K["greedy_match"](ref, tgt, 4.0, ok, ref[:, 0], ref[:, 0], 0.0)),
        ("detect_harris", lambda K: _with(K, lambda: detect_harris(img))),
        ("detect_dog", lambda K: _with(K, lambda: detect_dog(img))),
    ]


def _with(table, fn):
    saved = _kernels._ACTIVE
    _kernels._ACTIVE = table
    try:
        return fn()
    finally:
        _kernels._ACTIVE = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=192)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    numpy_k, numba_k = _kernels.kernels("numpy"), _kernels.kernels("numba")
    print(f"image {args.size}x{args.size}, best of {args.repeat}")
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, run in cases(args.size, rng):
        if not same(run(numpy_k), run(numba_k)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        t_np = best_of(lambda: run(numpy_k), args.repeat)
        t_nb = best_of(lambda: run(numba_k), args.repeat)
        print(f"{name:<24}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
