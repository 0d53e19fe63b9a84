import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy kernels are used
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "privinfer._kernels._ntt_c",
                ["src/privinfer/_kernels/_ntt_c.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
