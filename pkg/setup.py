import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "coroseg._kernels._compiled",
    sources=["src/coroseg/_kernels/_compiled.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # keep float expression evaluation identical to the NumPy fallback
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": 3}))
