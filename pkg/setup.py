import numpy as np
from setuptools import Extension, setup

# The compiled kernel is an optimisation only: if Cython (or a C compiler)
# is unavailable the package falls back to the numpy implementation at
# import time (see cryoloop.kernel).
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cryoloop._kernel",
                ["src/cryoloop/_kernel.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
