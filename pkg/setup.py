"""Build script: compiles the detector kernels when a C toolchain is present.

The compiled extension is an accelerator only. If Cython or the compiler is
unavailable the install proceeds and the package falls back to the pure-Python
kernels at import time.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "sparsedrift.detectors._native",
                sources=["src/sparsedrift/detectors/_native.pyx"],
                # keep C arithmetic bit-identical to the pure-Python kernels
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - degraded environment
    sys.stderr.write(f"sparsedrift: skipping compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
