"""Build script for the optional compiled kernel extension.

Set FPSIM_NO_EXT=1 to install without building the extension; the package
then runs on the pure-numpy fallback backend.
"""

import os

from setuptools import setup

if os.environ.get("FPSIM_NO_EXT") == "1":
    ext_modules = []
else:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "fpsim._kernels._core",
        sources=[
            "src/fpsim/_kernels/_core.pyx",
            "src/fpsim/_kernels/core_impl.c",
        ],
        include_dirs=[numpy.get_include(), "src/fpsim/_kernels"],
        # -ffp-contract=off: keep float64 sums bit-identical to the numpy
        # fallback by preventing FMA contraction.
        extra_compile_args=["-O3", "-ffp-contract=off", "-march=native"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
