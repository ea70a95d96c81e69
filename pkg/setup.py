"""Build script for the optional compiled convolution kernels.

The package is fully functional without the extension: tidecast.nn.kernels
falls back to the pure-numpy implementation when the compiled module is
missing, so a failed extension build is a warning, not an error.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "tidecast.nn._im2col",
                sources=["src/tidecast/nn/_im2col.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"tidecast: skipping compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
