import os
import sys

import numpy as np
from setuptools import Extension, setup

# OpenMP is optional; the kernels fall back to serial loops without it.
openmp = [] if sys.platform == "darwin" or os.environ.get("ROBLS_NO_OPENMP") else ["-fopenmp"]

try:
    from Cython.Build import cythonize
except ImportError:  # sdist without Cython: ship pure-Python fallback only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "robls._kernels",
                sources=["src/robls/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
