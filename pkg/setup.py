"""Build the compiled kernel; the package falls back to pure numpy without it.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FATIGUELIFE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pure-python install
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("fatiguelife._kernels", ["src/fatiguelife/_kernels.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
