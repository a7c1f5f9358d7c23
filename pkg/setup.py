"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python lane is selected at
import time), so a failed Cython build degrades to a warning rather than an
install error.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    import numpy.random
    from Cython.Build import cythonize

    npyrandom_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext_modules = cythonize(
        [
            Extension(
                "hortonlab._kernels._core",
                ["src/hortonlab/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                library_dirs=[npyrandom_dir],
                libraries=["npyrandom"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    import warnings

    warnings.warn(f"Cython kernel build skipped ({exc}); pure-Python lane will be used")

setup(ext_modules=ext_modules)
