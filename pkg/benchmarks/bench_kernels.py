"""Time the compiled kernels against the numpy fallback.

Also compares the vectorized (groupby) zonal path with the per-parcel
serial loop. Every pair of results is checked for bit-identity first.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from agrimon import kernels
from agrimon.minicube import Cube, GridSpec, ParcelIdRaster, zonal_stats


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return a == b
    return np.array_equal(a, b, equal_nan=True)


def kernel_cases(rng):
    n_pix, n_ids = 500_000, 5_000
    values = rng.normal(size=(4, n_pix))
    values[rng.random(values.shape) < 0.05] = np.nan
    ids = rng.integers(-1, n_ids, size=n_pix).astype(np.int64)
    xs = np.sort(rng.normal(size=200_000))
    ys_c = rng.integers(0, 4, size=xs.size).astype(np.int64)
    ys_r = rng.normal(size=xs.size)
    yield "zonal_reduce mean", lambda k: k.zonal_reduce(values, ids, n_ids, kernels.MEAN)
    yield "zonal_reduce max", lambda k: k.zonal_reduce(values, ids, n_ids, kernels.MAX)
    yield "best_split_classify", lambda k: k.best_split_classify(xs, ys_c, 4)
    yield "best_split_regress", lambda k: k.best_split_regress(xs, ys_r)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("compiled")
    except RuntimeError:
        cy = None
        print("compiled kernels not built; timing the numpy fallback only")

    print(f"{'kernel':<24}{'numpy s':>10}{'compiled s':>12}{'speedup':>9}")
    for name, fn in kernel_cases(rng):
        t_py, r_py = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<24}{t_py:>10.4f}")
            continue
        t_cy, r_cy = best_of(lambda: fn(cy), args.repeat)
        assert same(r_py, r_cy), f"{name}: backends disagree"
        print(f"{name:<24}{t_py:>10.4f}{t_cy:>12.4f}{t_py / t_cy:>8.1f}x")

    # zonal strategies: 5,000 parcels of three pixels on a 100x150 grid
    h, w = 100, 150
    grid = GridSpec(0.0, float(h), 1.0, w, h)
    ids = ParcelIdRaster(grid, (np.arange(h * w) // 3).reshape(h, w))
    cube = Cube(grid, [1, 2, 3], ["a", "b"], rng.normal(size=(3, 2, h, w)))
    t_g, g = best_of(lambda: zonal_stats(cube, ids, "mean", "groupby"), args.repeat)
    t_s, s = best_of(lambda: zonal_stats(cube, ids, "mean", "serial"), 1)
    assert g.equals(s), "zonal strategies disagree"
    print(f"\nzonal 5,000 parcels ({kernels.BACKEND} kernels): "
          f"groupby {t_g:.4f}s, serial {t_s:.3f}s, {t_s / t_g:.0f}x")


if __name__ == "__main__":
    main()
