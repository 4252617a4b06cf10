"""Build the optional compiled kernel extension.

The extension links against numpy's static ``libnpyrandom`` so that the
compiled kernels draw from the very same PCG64 bit stream as the pure
numpy fallback.  ``-ffp-contract=off`` keeps the deterministic float
transforms bit-identical between the two backends (no FMA fusion).

The extension is marked optional: if no C toolchain is available the
package installs anyway and falls back to the pure backend at import.
"""

import os

from setuptools import setup, Extension

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    npyrandom_dir = os.path.join(os.path.dirname(np.random.__file__), "lib")
    ext = Extension(
        "qcsbp._kernels",
        ["src/qcsbp/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npyrandom_dir],
        libraries=["npyrandom"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
