import os

from setuptools import setup

ext_modules = []
if os.environ.get("SIQR_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("siqr._kernels", ["src/siqr/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                       # no contraction into FMA: keeps results bit-identical to the Python kernels
                       extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"])],
            language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
