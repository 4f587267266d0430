"""Timing comparison of the numba and numpy grid kernels.

Run as a script:  python benchmarks/bench_kernels.py [--sizes 65,129,257]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lepage._kernels import numba_kernels, numpy_kernels

KERNELS = ("interior_residual", "interior_jacobian_coo", "cell_circulation")


def _args_for(name: str, size: int):
    rng = np.random.default_rng(size)
    u = np.cumsum(rng.standard_normal((size, size)), axis=0) * 0.01
    if name == "cell_circulation":
        return (np.sin(u), np.cos(u), 0.01, 0.01)
    return (u, 0.01, 0.01)


def _time(fn, args, repeats: int = 5) -> float:
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="65,129,257",
                        help="comma-separated grid sizes")
    parser.add_argument("--repeats", type=int, default=5)
    opts = parser.parse_args()
    sizes = [int(s) for s in opts.sizes.split(",")]

    flavors = {"numpy": numpy_kernels()}
    jitted = numba_kernels()
    if jitted is None:
        print("numba not importable; timing the numpy flavor only")
    else:
        flavors["numba"] = jitted

    header = f"{'kernel':<24}{'size':>6}" + "".join(
        f"{name + ' (s)':>14}" for name in flavors)
    if len(flavors) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in KERNELS:
        for size in sizes:
            args = _args_for(name, size)
            times = {fl: _time(fns[name], args, opts.repeats)
                     for fl, fns in flavors.items()}
            row = f"{name:<24}{size:>6}" + "".join(
                f"{times[fl]:>14.6f}" for fl in flavors)
            if len(times) == 2:
                row += f"{times['numpy'] / times['numba']:>10.2f}"
            print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
