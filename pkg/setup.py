"""Build hooks: compile the optional Cython kernel module if a toolchain exists.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any build failure here is non-fatal.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "mhcount._kernels",
                sources=["src/mhcount/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"mhcount: skipping Cython kernels ({exc}); pure-NumPy fallback will be used")
    ext_modules = []

setup(ext_modules=ext_modules)
