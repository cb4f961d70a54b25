"""Build script: compiles the optional LSTM kernel extension when possible.

`pip install .` succeeds without Cython/scipy (pure-numpy fallback kernels);
run `python setup.py build_ext --inplace` with the `fast` extra installed to
enable the compiled kernels.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import scipy  # noqa: F401  (cython_blas .pxd must be resolvable)

    ext_modules = cythonize(
        [
            Extension(
                "gedkit._kernels._lstm_c",
                ["src/gedkit/_kernels/_lstm_c.pyx"],
                # -ffast-math lets gcc use vectorized exp (gate inputs are
                # clamped in the kernel, so no inf/nan can reach the math);
                # the vectorized calls live in glibc's libmvec.
                extra_compile_args=["-O3", "-ffast-math"],
                extra_link_args=["-lmvec", "-lm"],
            )
        ],
        language_level=3,
    )
except ImportError as exc:
    print(f"note: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
