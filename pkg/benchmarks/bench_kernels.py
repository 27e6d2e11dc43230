"""Benchmark the compiled kernel backend against the pure-numpy fallback.

Times the three hot primitives (matmul, row softmax, layer norm) and their
backward companions at several matrix sizes, then prints a table with the
speedup of the compiled extension over the numpy implementation.

Usage:
    python3 benchmarks/bench_kernels.py [--sizes 16,64,256] [--repeats 200]
"""

import argparse
import time

import numpy as np

from periagg.kernels import _np_backend

try:
    from periagg.kernels import _cykernels
except ImportError:
    _cykernels = None


def _time(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def make_cases(n, rng):
    a = np.ascontiguousarray(rng.standard_normal((n, n)))
    b = np.ascontiguousarray(rng.standard_normal((n, n)))
    g = np.ascontiguousarray(rng.standard_normal((n, n)))
    gain = rng.standard_normal(n)
    bias = rng.standard_normal(n)

    def cases(impl):
        p = impl.softmax_rows(a)
        _, xhat, inv_std = impl.layer_norm(a, gain, bias, 1e-5)
        return {
            "matmul": lambda: impl.matmul(a, b),
            "softmax_rows": lambda: impl.softmax_rows(a),
            "softmax_rows_grad": lambda: impl.softmax_rows_grad(p, g),
            "layer_norm": lambda: impl.layer_norm(a, gain, bias, 1e-5),
            "layer_norm_grad": lambda: impl.layer_norm_grad(g, xhat, inv_std, gain),
        }

    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="16,64,256",
                        help="comma-separated square matrix sizes")
    parser.add_argument("--repeats", type=int, default=200,
                        help="timed calls per measurement")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _cykernels is None:
        print("compiled backend not available; timing numpy only")
    rng = np.random.default_rng(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]
    header = f"{'op':<20}{'n':>6}{'numpy (us)':>14}"
    if _cykernels is not None:
        header += f"{'cython (us)':>14}{'speedup':>10}"
    print(header)
    for n in sizes:
        cases = make_cases(n, rng)
        np_cases = cases(_np_backend)
        cy_cases = cases(_cykernels) if _cykernels is not None else None
        for name, fn in np_cases.items():
            t_np = _time(fn, args.repeats) * 1e6
            line = f"{name:<20}{n:>6}{t_np:>14.2f}"
            if cy_cases is not None:
                t_cy = _time(cy_cases[name], args.repeats) * 1e6
                line += f"{t_cy:>14.2f}{t_np / t_cy:>10.2f}x"
            print(line)


if __name__ == "__main__":
    main()
