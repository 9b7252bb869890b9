"""Compare the compiled kernels against the NumPy fallbacks.

Both implementations are imported directly (bypassing the backend selector)
so the numbers are comparable on any machine.  Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import timeit

import numpy as np

from mhcount import _kernels_py

try:
    from mhcount import _kernels
except ImportError:
    _kernels = None


def bench(label, fn, number, repeat=5):
    best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    print(f"  {label:<18} {best * 1e3:10.3f} ms/call")
    return best


def run_signed_box():
    print("signed_box_count (n=4, a=2, k=3, R=40; ~530k prefixes)")
    args = (4, 2, 3, 40)
    ref = _kernels_py.signed_box_count(*args)
    t_py = bench("numpy", lambda: _kernels_py.signed_box_count(*args), 3)
    if _kernels is not None:
        assert _kernels.signed_box_count(*args) == ref
        t_cy = bench("cython", lambda: _kernels.signed_box_count(*args), 3)
        print(f"  speedup            {t_py / t_cy:10.2f}x")


def run_weighted_power():
    rows, slots, corners = 36864, 129, 4
    print(f"weighted_power_data ({rows} rows x {slots} slots x {corners} corners,"
          " float32 interpolation weights)")
    rng = np.random.default_rng(0)
    interp = rng.random((rows, corners), dtype=np.float32)
    interp /= interp.sum(axis=1, keepdims=True)
    logbase = np.log(1.0 + rng.random(rows) * 64.0)
    s = 2.45

    def sweep(impl):
        def call():
            for _ in range(slots):
                impl.weighted_power_data(interp, logbase, s)
        return call

    ref = _kernels_py.weighted_power_data(interp, logbase, s)
    t_py = bench("numpy", sweep(_kernels_py), 1)
    if _kernels is not None:
        got = _kernels.weighted_power_data(interp, logbase, s)
        assert np.allclose(got, ref, rtol=1e-6)
        t_cy = bench("cython", sweep(_kernels), 1)
        print(f"  speedup            {t_py / t_cy:10.2f}x")


if __name__ == "__main__":
    if _kernels is None:
        print("compiled extension not available; timing the fallback only\n")
    run_signed_box()
    print()
    run_weighted_power()
