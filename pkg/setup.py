"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any compilation failure downgrades to a
pure-Python install instead of aborting.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            print(f"warning: skipping compiled kernels ({exc}); "
                  "the NumPy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "the NumPy fallback will be used")


ext_modules = []
if os.environ.get("WASS_DRO_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension(
                "wass_dro._kernels._speedups",
                sources=["src/wass_dro/_kernels/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
