"""Build the optional Cython detector kernel.

The package works without it: ``veremi_bench.detect`` falls back to a
pure-Python kernel when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("VEREMI_BENCH_NO_EXT"):
    try:
        import numpy  # noqa: F401  (build-time presence check)
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "veremi_bench.detect._sweep",
                    ["src/veremi_bench/detect/_sweep.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
