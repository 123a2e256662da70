"""Optional compiled Airy kernel; the package falls back to numpy without it."""
import os

from setuptools import setup


def extensions():
    if os.environ.get("COUETTE_PURE_PYTHON", "") not in ("", "0"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension("couette._airy_ext", ["src/couette/_airy_ext.pyx"],
                    include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions())
