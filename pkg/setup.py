import os
import sys

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MCASIM_PURE_PYTHON"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("Cython/numpy unavailable; installing the pure-Python fallback only", file=sys.stderr)
    else:
        extra = ["/O2"] if os.name == "nt" else ["-O3", "-ffp-contract=off"]
        ext = Extension(
            "mcasim.kernels._core",
            ["src/mcasim/kernels/_core.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=extra,
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
