import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DRIFTFLOW_PURE_PYTHON"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("driftflow._kernels", ["src/driftflow/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            language_level=3,
        )
    except ImportError:
        # no compiler toolchain: the NumPy fallback in _kernels_py is used
        ext_modules = []

setup(ext_modules=ext_modules)
