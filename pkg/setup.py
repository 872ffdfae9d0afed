import numpy as np
from setuptools import Extension, setup

# The compiled integrator core is optional: without Cython (or a C compiler)
# the package falls back to the NumPy implementation selected at import time.
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "gridreg._kernels",
                ["src/gridreg/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
