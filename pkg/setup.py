"""Build script for the optional compiled kernels.

The Cython extension is built when Cython and a C compiler are available.
Without them the package installs pure-Python and falls back to the numpy
kernels at import time.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SPANE_KIT_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "spane_kit._ckernels",
                    ["src/spane_kit/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
