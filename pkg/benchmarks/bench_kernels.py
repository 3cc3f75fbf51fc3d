"""Time the compiled kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128 256] [--repeat 5]

Both backends are imported directly, so the comparison runs in one process
regardless of ``DUNEHOM_PURE_PYTHON``; the largest output difference between
the two is printed next to the timings.
"""
import argparse
import timeit

import numpy as np

from dunehom import _kernels_py

try:
    from dunehom import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _inputs(n, rng):
    x = np.arange(n) / n
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    u1 = 0.8 * np.cos(2 * np.pi * x1) + 0.1 * rng.standard_normal((n, n))
    u2 = 0.3 * np.sin(2 * np.pi * x2)
    fa = 1.0 + 0.1 * np.cos(2 * np.pi * (x1 + x2))
    fc = 0.8 * fa
    return {
        "transport_coefficients": (u1, u2, fa, fc, 0.05, 1.0, 0.6),
        "fd_div_flux": (np.abs(u1) + 0.1, np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2), 1.0 / n),
        "fd_centered_div": (u1, u2, 1.0 / n),
    }


def _max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the NumPy fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>6}{'numpy [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for n in args.sizes:
        for name, call_args in _inputs(n, rng).items():
            py = getattr(_kernels_py, name)
            number = max(1, 20000 // (n * n // 16 + 1))
            t_py = min(timeit.repeat(lambda: py(*call_args), number=number, repeat=args.repeat)) / number
            if _compiled is None:
                print(f"{name:<24}{n:>6}{1e3 * t_py:>14.4f}{'-':>14}{'-':>10}{'-':>12}")
                continue
            cy = getattr(_compiled, name)
            c_args = [np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in call_args]
            t_cy = min(timeit.repeat(lambda: cy(*c_args), number=number, repeat=args.repeat)) / number
            diff = _max_diff(py(*call_args), cy(*c_args))
            print(f"{name:<24}{n:>6}{1e3 * t_py:>14.4f}{1e3 * t_cy:>14.4f}{t_py / t_cy:>10.2f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
