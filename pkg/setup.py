"""Build hooks for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile degrades to a warning rather than killing
the install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, otherwise install pure-Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            "qfbart: compiled kernels unavailable (%s); "
            "falling back to the numpy implementation" % exc
        )


def extensions():
    if os.environ.get("QFBART_NO_EXTENSION"):
        return []
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "qfbart._kernels",
        sources=["src/qfbart/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
