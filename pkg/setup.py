"""Build hook for the optional Cython kernels.

The package works without a compiler; ``graphids.kernels`` falls back to the
pure-Python implementations when the extension is missing.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "graphids._ckernels",
                ["src/graphids/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:
    print(f"graphids: skipping compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
