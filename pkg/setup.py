"""Build hook for the optional compiled simulation kernels.

If Cython or a C compiler is missing the package still installs; the
pure-Python kernels are used instead.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("FORKJOIN_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "forkjoin.sim._kernels",
                    ["src/forkjoin/sim/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    # keep float results identical to the Python kernels
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
