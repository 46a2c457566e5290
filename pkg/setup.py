"""Builds the compiled convolution/pooling kernels.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes training and streaming inference faster.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "hiros.kernels._ckernels",
        ["src/hiros/kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # fast-math is safe here: kernel inputs are validated finite and the
        # contractions are plain sums/products (no NaN/Inf propagation games)
        extra_compile_args=["-O3", "-ffast-math", "-funroll-loops"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
