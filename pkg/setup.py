"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/dappbench/kernels/_ckernels.pyx",
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"warning: skipping compiled kernels ({exc})", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)
