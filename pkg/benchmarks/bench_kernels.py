"""Time the compiled kernels against the NumPy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--packets N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from mcasim import kernels
from mcasim.rng import RngStream


def dup_inputs(n):
    rng = RngStream(1, "bench:dup")
    return rng.uniform((2, n, 8)), np.array([0.1, 0.1])


def comp_inputs(n):
    rng = RngStream(1, "bench:comp")
    g = -np.log1p(-rng.uniform((3, n, 16)))
    mode = rng.integers(3, n).astype(np.int8)
    return [np.ascontiguousarray(x) for x in g], mode, 2.0 * rng.uniform(n)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not built; only the fallback can be timed")
    u, p = dup_inputs(args.packets)
    (g0, g1, g2), mode, icoef = comp_inputs(args.packets)

    def run_first_success(mod):
        out = np.full(args.packets, -1, dtype=np.int64)
        mod.first_success(g0, g1, g2, mode, icoef, 1.0, 1.0, 0, out)

    cases = {
        "dup_isolated": lambda mod: mod.dup_isolated(u, p, True, 4, 1),
        "first_success": run_first_success,
    }
    print(f"{'kernel':<15}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for name, fn in cases.items():
        t_np = min(timeit.repeat(lambda: fn(kernels.fallback), number=1, repeat=args.repeat)) * 1e3
        if kernels.compiled is None:
            print(f"{name:<15}{t_np:12.1f}{'-':>13}{'-':>9}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(kernels.compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{t_np:12.1f}{t_cy:13.1f}{t_np / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
