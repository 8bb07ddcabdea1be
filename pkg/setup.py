"""Build script for the optional compiled LSTM kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile must not break installation.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "sketchsql.kernels._lstm_cy",
                ["src/sketchsql/kernels/_lstm_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
