"""Build the optional compiled kernels.

Without Cython (or a C compiler) the package installs pure-Python and
``qconv`` falls back to ``qconv._fallback`` at import.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "qconv._kernels",
                ["src/qconv/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: the compiled and Python kernels must agree bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"embedsignature": True},
    )

setup(ext_modules=ext_modules)
