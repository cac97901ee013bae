import os

import numpy
from setuptools import Extension, setup

# SAIA_NO_EXT=1 installs the pure-Python package only.
ext_modules = []
if not os.environ.get("SAIA_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "saia._kernels",
                ["src/saia/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
