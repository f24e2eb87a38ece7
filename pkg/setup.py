import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are optional: the package falls back to the pure
# numpy implementations when the extension is unavailable.
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "textrgcn.kernels._ckernels",
                ["src/textrgcn/kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3", "-std=c++14"],
            )
        ],
        language_level="3",
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
