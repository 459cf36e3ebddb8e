"""Build script: compiles the optional Cython kernel core.

The package works without the extension (NumPy fallback is selected at
import); the build therefore tolerates a missing Cython or a failing
compiler instead of aborting the install.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("HOME_EQUIV_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        # -ffp-contract=off keeps the compiled kernels bit-identical to the
        # NumPy fallback (no FMA contraction of a*b+c).
        ext_modules = cythonize(
            [
                Extension(
                    "home_equiv.kernels._core",
                    ["src/home_equiv/kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
