"""Build script: compiles the optional generation fast path.

The package is pure Python plus one Cython extension holding the
per-sample synthesis kernels.  If Cython or a C compiler is missing the
extension is skipped and the numpy fallback in lpwavenet.kernels is used
at runtime.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "lpwavenet.kernels._fast",
                ["src/lpwavenet/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops"],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
