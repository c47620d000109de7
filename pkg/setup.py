"""Build script for the optional compiled stepping kernel.

The package is fully functional without the extension (a pure-Python kernel
is selected at import time).  Building the extension makes long simulation
runs roughly two orders of magnitude faster:

    python setup.py build_ext --inplace

Floating-point contraction is disabled so that the compiled kernel is
bit-identical to the pure-Python one.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "tollsim._kernels_cy",
                ["src/tollsim/_kernels_cy.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
