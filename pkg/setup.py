"""Build script: compiles the optional Cython kernel for Schur-complement assembly.

If Cython or a C compiler is unavailable the package installs without the
extension and falls back to the NumPy kernel at import time.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "drcvar.kernels._schur_cy",
                ["src/drcvar/kernels/_schur_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
