"""Backend selector for the hot kernels.

Prefers the compiled extension and falls back to the NumPy implementations;
``BACKEND`` records which one is live so benchmarks and bug reports can say.
"""

try:
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:  # extension not built; the fallback is always available
    from . import _kernels_py as _impl

    BACKEND = "numpy"

signed_box_count = _impl.signed_box_count
weighted_power_data = _impl.weighted_power_data
