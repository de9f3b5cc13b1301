"""Build script: compiles the optional Cython kernels.

The package works without the extension (a numpy fallback is selected at
import time), so compilation failures must not break installation.
Set KCMAP_PURE_PYTHON=1 to skip the extension build entirely.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to a pure-python install on compiler errors."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"WARNING: compiled kernels unavailable, using numpy fallback ({exc})",
              file=sys.stderr)


ext_modules = []
cmdclass = {}
if os.environ.get("KCMAP_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        # -ffp-contract=off keeps float arithmetic bit-identical to the
        # numpy fallback (no fused multiply-add); parity is tested.
        ext = Extension(
            "kcmap._kernels.cykernels",
            ["src/kcmap/_kernels/cykernels.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], language_level=3)
        cmdclass["build_ext"] = optional_build_ext
    except Exception as exc:  # Cython or numpy missing at build time
        optional_build_ext._warn(exc)

setup(ext_modules=ext_modules, cmdclass=cmdclass)
