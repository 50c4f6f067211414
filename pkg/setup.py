"""Build script for the compiled ray-tracing kernels.

The extension is optional: if it fails to build or import, the package
falls back to the pure-NumPy kernels in ``tomoforge._kernels_py``.
Compile in place with ``python setup.py build_ext --inplace``.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "tomoforge._kernels",
        ["src/tomoforge/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
