"""Builds the compiled convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a missing Cython toolchain only costs speed.
"""

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "adnet.kernels._ckernels",
                ["src/adnet/kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
