"""Build hook for the optional compiled geometry kernel.

The package is pure Python except for flashquad.geometry._kernel, a Cython
module mirroring flashquad.geometry._pure.  If Cython (or a C compiler) is
unavailable the build still succeeds and the package falls back to the pure
implementation at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "flashquad.geometry._kernel",
                ["src/flashquad/geometry/_kernel.pyx"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": False,  # need Python floor-division semantics
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
