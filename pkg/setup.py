"""Builds the optional compiled trial kernel.

If Cython or a C compiler is unavailable the package installs without it
and falls back to the numpy implementation at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DELAYEDCHOICE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "delayedchoice._kernel",
                    ["src/delayedchoice/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no FMA contraction: results must match the numpy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
